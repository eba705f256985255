#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "inflaquant/design_matrices.hpp"
#include "inflaquant/engine.hpp"
#include "inflaquant/model_core.hpp"
#include "inflaquant/rng.hpp"

namespace inflaquant {

struct MFunctions {
  double m1;
  double m2;
  double m3;
  double m4;
};

MFunctions m_functions(double x);

struct ScenarioProbs {
  double p0;
  double p1;
  double p2;
};

// eta0 = 0.3 (m1(x1) + m2(x2)) - k, eta1 = 0.3 (m3(x1) + m4(x2)) - k, multinomial logit.
ScenarioProbs scenario_probs(double x1, double x2, double k);
// True continuous location m1(x1) + m2(x2), shared by both scenarios.
double scenario_eta2(double x1, double x2);

// One draw of eta + xi w + sigma z sqrt(w / delta^2), w ~ Exp(delta^2).
double sample_ald(double eta, double delta_sq, double tau, Rng& rng);

double student_t_quantile(double df, double tau);
double sample_student_t(double df, Rng& rng);
double gjs_t_quantile(double mu, double sigma, double df, double tau);
double sample_gjs_t(double mu, double sigma, double df, Rng& rng);

enum class Scenario { S1, S2 };
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct ScenarioConfig {
  Scenario scenario = Scenario::S1;
  int n = 500;
  double k = 1.0;
  double tau = 0.5;
  std::uint64_t replicate_seed = 1;
  std::uint64_t covariate_seed = 0;
  double delta_sq = 9.0;  // S1
  double df = 4.0;        // S2

  void validate() const;
};

struct Covariates {
  Vector x1;
  Vector x2;
};

Covariates draw_covariates(int n, std::uint64_t seed);

struct Dataset {
  Vector x1;
  Vector x2;
  Vector y;
  // Truth at each row.
  Vector p0;
  Vector p1;
  Vector p2;
  Vector quantile;  // tau-quantile of y given y in (0, 1)
  long n_sigma_clamped = 0;
  long n_response_clamped = 0;
};

// Truth for the given covariates under a scenario at its generation tau.
Dataset scenario_truth(const ScenarioConfig& config, const Covariates& cov);
// Responses drawn with rng; covariates as supplied.
Dataset generate_scenario(const ScenarioConfig& config, const Covariates& cov, Rng& rng);
// Covariates from covariate_seed, responses from replicate_seed.
Dataset generate_scenario(const ScenarioConfig& config);
Dataset generate_s1(const ScenarioConfig& config, Rng& rng);
Dataset generate_s2(const ScenarioConfig& config, Rng& rng);

// P-splines in x1 and x2 for all three predictors.
ModelSpec build_study_model(const Dataset& data, double tau, const PSplineOptions& options = {});

struct StudySettings {
  int n_replicates = 20;
  int n_test = 100;
  std::uint64_t test_seed = 7;
  double level = 0.95;
  PSplineOptions spline;
  RunConfig run;
};

struct ReplicateMetrics {
  int replicate = 0;
  int n_boundary = 0;
  long n_sigma_clamped = 0;
  double quantile_rmse = 0.0;  // per-draw RMSE over test points, averaged over draws
  double coverage_quantile = 0.0;
  double coverage_p0 = 0.0;
  double coverage_p1 = 0.0;
  // Discrete effects after centering on their grid means, keyed by block label.
  std::map<std::string, double> effect_rmse;
  std::map<std::string, double> rhat;
  std::map<std::string, double> ess_bulk;
  double seconds = 0.0;
};

struct StudyResult {
  std::vector<ReplicateMetrics> replicates;
  double mean_quantile_rmse = 0.0;
  // Averaged over replicates per test point, then over points.
  double coverage_quantile = 0.0;
  double coverage_p0 = 0.0;
  double coverage_p1 = 0.0;
  double max_rhat = 0.0;
  double min_ess_bulk = 0.0;
};

// Replicate r uses replicate_seed + r for responses and base_seed + r for the chains.
StudyResult run_replicate_study(const ScenarioConfig& config, const StudySettings& settings);

// Parameters whose R-hat and bulk ESS are tracked per replicate.
std::vector<std::string> study_monitored_parameters(const ModelSpec& spec);

}  // namespace inflaquant
