#pragma once

#include <array>
#include <optional>
#include <string>

#include <Eigen/Cholesky>

#include "inflaquant/model_core.hpp"
#include "inflaquant/rng.hpp"

namespace inflaquant {

// Identifies one coefficient block. block == kIntercept selects the intercept.
struct BlockRef {
  static constexpr int kIntercept = -1;
  int predictor = 0;
  int block = kIntercept;
};

std::string block_label(const ModelSpec& spec, BlockRef ref);

enum class LikelihoodFamily { MultinomialZero, MultinomialOne, Binary, Continuous };
LikelihoodFamily likelihood_family(const ModelSpec& spec, int predictor);

struct GradHess {
  Vector score;
  Matrix fisher;
};

// Log full conditional of one coefficient block with every other parameter
// held at its value in the state the object was built from.
class BlockConditional {
 public:
  BlockConditional(const ModelSpec& spec, const ObservationSet& obs, const ModelState& state, BlockRef ref,
                   const std::array<Vector, 3>& etas);

  const Vector& current() const { return current_; }
  LikelihoodFamily family() const { return family_; }
  double log_density(const Vector& beta) const;
  GradHess score_fisher(const Vector& beta) const;
  // Linear predictor of this block's predictor with beta substituted.
  Vector eta_at(const Vector& beta) const;

 private:
  Vector contribution(const Vector& beta) const;
  Vector transpose_times(const Vector& v) const;
  Matrix weighted_gram(const Vector& weights) const;

  const ModelSpec& spec_;
  const ObservationSet& obs_;
  BlockRef ref_;
  const DesignBlock* block_ = nullptr;
  LikelihoodFamily family_;
  Vector current_;
  Vector offset_;      // eta_j minus this block's contribution
  Vector other_eta_;   // partner predictor of a multinomial block
  Vector indicator_;   // binary outcome for a binary block
  Vector precision_;   // continuous: delta^2 / (sigma^2 w_i) on I, 0 elsewhere
  Vector target_;      // continuous: y†_i - xi w_i on I, 0 elsewhere
  double inv_nu_sq_ = 0.0;
  mutable std::optional<Matrix> fixed_fisher_;
};

GradHess score_fisher(const ModelSpec& spec, const ObservationSet& obs, const ModelState& state, BlockRef ref);

// Step-size adaptation targeting a mean acceptance probability.
struct DualAveraging {
  double mu = 0.0;
  double log_eps = 0.0;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  long t = 0;
  double target = 0.8;
  double gamma = 0.05;
  double t0 = 10.0;
  double kappa = 0.75;

  static DualAveraging start(double eps_init, double target = 0.8);
  // Feeds one acceptance probability and returns the next step size.
  double update(double accept_prob);
  double final_step_size() const;
};

struct BlockUpdater {
  BlockRef ref;
  std::string label;
  double step_size = 0.1;
  DualAveraging adaptation = DualAveraging::start(0.1);
  long attempts = 0;
  long accepts = 0;
};

struct MhResult {
  Vector beta;
  bool accepted = false;
  double accept_prob = 0.0;
};

// Cholesky of F with escalating diagonal jitter (1e-8 .. 1e-2 times mean diag).
std::optional<Eigen::LLT<Matrix>> jittered_cholesky(const Matrix& fisher);

// One IWLS-preconditioned Metropolis-Hastings step:
//   beta* ~ N(beta + eps^2/2 F^{-1} s, eps^2 F^{-1}).
// Throws SamplerAbort when the current point yields no usable F.
MhResult iwls_mh_update(const BlockUpdater& updater, const BlockConditional& target, Rng& rng);

struct InverseGammaParams {
  double shape;
  double scale;
};

struct GammaParams {
  double shape;
  double rate;
};

InverseGammaParams smoothing_variance_conditional(const Vector& beta, const Matrix& K, int rank, double a, double b);
double gibbs_smoothing_variance(const Vector& beta, const Matrix& K, int rank, double a, double b, Rng& rng);

// Michael-Schucany-Haas transformation with one rejection step.
double sample_inverse_gaussian(double mu, double lambda, Rng& rng);

struct LatentWeightsDraw {
  Vector w;
  long n_clamped = 0;
};

LatentWeightsDraw gibbs_latent_weights(const ModelState& state, const ObservationSet& obs, const Vector& eta2,
                                       Rng& rng);

GammaParams delta_sq_conditional(const ModelState& state, const ObservationSet& obs, const Vector& eta2, double a0,
                                 double b0);
double gibbs_delta_sq(const ModelState& state, const ObservationSet& obs, const Vector& eta2, double a0, double b0,
                      Rng& rng);

}  // namespace inflaquant
