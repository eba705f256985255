#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "inflaquant/design_matrices.hpp"

namespace inflaquant {

enum class InflationKind { ZeroOnly, OneOnly, ZeroAndOne };

std::string to_string(InflationKind kind);
InflationKind inflation_kind_from_string(const std::string& name);

inline bool has_zero(InflationKind k) { return k != InflationKind::OneOnly; }
inline bool has_one(InflationKind k) { return k != InflationKind::ZeroOnly; }

// Predictor indices: 0 = zero-inflation, 1 = one-inflation, 2 = continuous quantile.
inline constexpr int kZeroPredictor = 0;
inline constexpr int kOnePredictor = 1;
inline constexpr int kContinuousPredictor = 2;

// An intercept plus structured additive blocks. The intercept is always present.
struct PredictorSpec {
  std::vector<DesignBlock> blocks;
};

struct ModelSpec {
  InflationKind inflation = InflationKind::ZeroAndOne;
  double tau = 0.5;
  PredictorSpec discrete0;
  PredictorSpec discrete1;
  PredictorSpec continuous;
  double delta_prior_a = 0.001;
  double delta_prior_b = 0.001;

  bool has_predictor(int j) const;
  const PredictorSpec& predictor(int j) const;
  // Throws ValidationError on a malformed spec; n is the observation count.
  void validate(Eigen::Index n) const;
};

// ALD mixture constants.
double ald_xi(double tau);
double ald_sigma_sq(double tau);

struct ObservationSet {
  Vector y;
  Vector ind0;
  Vector ind1;
  Vector ind_c;
  std::vector<Eigen::Index> cont_index;
  Vector y_dagger;  // logit(y) over cont_index
  std::vector<std::string> warnings;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index n_cont() const { return static_cast<Eigen::Index>(cont_index.size()); }
};

ObservationSet partition_observations(const Vector& y, InflationKind inflation);

struct PredictorState {
  double intercept = 0.0;
  std::vector<Vector> coef;
  // Empty for unpenalised blocks.
  std::vector<std::optional<double>> nu_sq;
};

struct ModelState {
  double tau = 0.5;
  std::array<PredictorState, 3> predictors;
  Vector w;  // latent weights over cont_index
  double delta_sq = 1.0;

  double xi() const { return ald_xi(tau); }
  double sigma_sq() const { return ald_sigma_sq(tau); }
};

struct CategoryProbs {
  Vector p0;
  Vector p1;
  Vector p2;
};

// Multinomial logit (both sides) or logistic (one side) probabilities.
// The predictor of an absent category is ignored and may be empty.
CategoryProbs link_probs(InflationKind inflation, const Vector& eta0, const Vector& eta1);

double discrete_loglik(const ObservationSet& obs, const Vector& p0, const Vector& p1, const Vector& p2);
// Same quantity evaluated directly from predictors in log space.
double discrete_loglik_eta(InflationKind inflation, const ObservationSet& obs, const Vector& eta0,
                           const Vector& eta1);

double check_loss(double v, double tau);
double ald_logpdf(double y_dagger, double eta, double delta_sq, double tau);

// Sum over the continuous observations of log N(y†; eta + xi w, w sigma^2/delta^2) + log Exp(w; delta^2).
// eta2 is indexed by observation (length n).
double augmented_continuous_loglik(const ModelState& state, const ObservationSet& obs, const Vector& eta2);

double log_prior_block(const Vector& beta, const Matrix& K, int rank, double nu_sq);
double log_inverse_gamma(double x, double shape, double scale);
double log_gamma_density(double x, double shape, double rate);

// intercept * 1_n + sum_k B_k beta_k
Vector linear_predictor(const PredictorSpec& spec, double intercept, const std::vector<Vector>& coef,
                        Eigen::Index n);
// Absent predictors are returned as zero vectors.
std::array<Vector, 3> all_linear_predictors(const ModelSpec& spec, const ModelState& state, Eigen::Index n);

// Discrete likelihood + augmented continuous likelihood + coefficient priors
// + smoothing-variance hyperpriors + delta^2 prior.
double log_posterior(const ModelSpec& spec, const ObservationSet& obs, const ModelState& state);

}  // namespace inflaquant
