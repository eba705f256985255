#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "inflaquant/model_core.hpp"
#include "inflaquant/rng.hpp"

namespace inflaquant {

// ContinuousOnly holds the discrete predictors at their initial values and
// records only continuous-part parameters; used to reuse one discrete fit
// across several quantile levels.
enum class SamplingScope { All, ContinuousOnly };

struct RunConfig {
  int n_chains = 4;
  int warmup = 1500;
  int draws = 5000;
  std::uint64_t base_seed = 0;
  int thin = 1;
  bool store_latent = false;
  // 0: INFLAQUANT_THREADS if set, else hardware concurrency.
  int max_workers = 0;
  double initial_step_size = 0.1;
  SamplingScope scope = SamplingScope::All;

  void validate() const;
};

struct ChainDraws {
  int chain_id = 0;
  std::vector<std::string> parameter_names;
  Matrix values;  // draws x parameters, column-major
  Vector log_posterior;
  std::map<std::string, double> accept_rates;
  std::map<std::string, double> step_sizes;
  std::vector<std::string> warnings;

  Eigen::Index n_draws() const { return values.rows(); }
  // -1 when absent.
  Eigen::Index index_of(const std::string& name) const;
  Vector column(const std::string& name) const;
};

std::string coefficient_name(int predictor, const std::string& block_label, Eigen::Index l);
std::string intercept_name(int predictor);
std::string smoothing_variance_name(int predictor, const std::string& block_label);
inline const char* kDeltaSqName = "delta_sq";

ModelState initialize_state(const ModelSpec& spec, const ObservationSet& obs, Rng& rng);

ChainDraws run_chain(const ModelSpec& spec, const ObservationSet& obs, const RunConfig& config, int chain_id);
std::vector<ChainDraws> run_chains(const ModelSpec& spec, const ObservationSet& obs, const RunConfig& config);

// Worker count after applying max_workers / INFLAQUANT_THREADS.
int resolve_worker_count(const RunConfig& config);

}  // namespace inflaquant
