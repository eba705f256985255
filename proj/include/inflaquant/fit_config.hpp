#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inflaquant/design_matrices.hpp"
#include "inflaquant/engine.hpp"
#include "inflaquant/io.hpp"
#include "inflaquant/model_core.hpp"

namespace inflaquant {

struct TermConfig {
  TermKind kind = TermKind::Linear;
  // Linear: every column. Others: the single covariate (the effect modifier for varying terms).
  std::vector<std::string> columns;
  std::string by;  // varying only
  PSplineOptions spline;
  double hyper_a = 0.01;
  double hyper_b = 0.01;
  std::filesystem::path adjacency;  // mrf only
  std::vector<std::string> levels;  // optional factor ordering
};

// Predictor keys in the file: "zero", "one", "continuous".
struct FitConfig {
  std::filesystem::path data_path;
  std::string response = "y";
  InflationKind inflation = InflationKind::ZeroAndOne;
  std::vector<double> taus{0.5};
  std::array<std::vector<TermConfig>, 3> terms;
  RunConfig run;
  std::filesystem::path output_dir = "out";
  nlohmann::json source;

  void validate() const;
};

// Relative paths are resolved against base_dir.
FitConfig parse_fit_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
FitConfig load_fit_config(const std::filesystem::path& path);

struct FactorCoding {
  std::vector<std::string> levels;
  std::map<std::string, int> code;
};

struct PreparedData {
  Vector y;
  CovariateFrame frame;
  std::map<std::string, FactorCoding> factors;
  std::map<std::string, AdjacencyGraph> graphs;  // keyed by mrf column
};

// Reads "regionA regionB" lines; blank lines and '#' comments are skipped.
std::vector<std::pair<std::string, std::string>> read_adjacency_file(const std::filesystem::path& path);

PreparedData prepare_training_data(const FitConfig& config, const CsvTable& table);
// Covariates of new rows coded with the training factor levels. The response is not needed.
CovariateFrame prepare_new_data(const FitConfig& config, const PreparedData& training, const CsvTable& table);

ModelSpec build_model_spec(const FitConfig& config, const PreparedData& data, double tau);

// Spec echo for the metadata sidecar: blocks, recipes and constraint matrices.
nlohmann::json describe_model(const ModelSpec& spec);

std::string tau_directory_name(double tau);

}  // namespace inflaquant
