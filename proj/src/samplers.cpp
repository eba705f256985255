#include "inflaquant/samplers.hpp"

#include <cmath>
#include <stdexcept>

#include "inflaquant/errors.hpp"

namespace inflaquant {
namespace {

double log1p_exp2(double a, double b) {
  const double m = std::max({0.0, a, b});
  return m + std::log(std::exp(-m) + std::exp(a - m) + std::exp(b - m));
}

double logistic(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

bool all_finite(const GradHess& gh) { return gh.score.allFinite() && gh.fisher.allFinite(); }

}  // namespace

std::string block_label(const ModelSpec& spec, BlockRef ref) {
  const std::string prefix = "pred" + std::to_string(ref.predictor) + ".";
  if (ref.block == BlockRef::kIntercept) return prefix + "intercept";
  return prefix + spec.predictor(ref.predictor).blocks[static_cast<std::size_t>(ref.block)].label;
}

LikelihoodFamily likelihood_family(const ModelSpec& spec, int predictor) {
  if (predictor == kContinuousPredictor) return LikelihoodFamily::Continuous;
  if (spec.inflation != InflationKind::ZeroAndOne) return LikelihoodFamily::Binary;
  return predictor == kZeroPredictor ? LikelihoodFamily::MultinomialZero : LikelihoodFamily::MultinomialOne;
}

// ---------------------------------------------------------------------------

BlockConditional::BlockConditional(const ModelSpec& spec, const ObservationSet& obs, const ModelState& state,
                                   BlockRef ref, const std::array<Vector, 3>& etas)
    : spec_(spec), obs_(obs), ref_(ref), family_(likelihood_family(spec, ref.predictor)) {
  const int j = ref.predictor;
  const PredictorState& ps = state.predictors[j];
  if (ref.block == BlockRef::kIntercept) {
    current_ = Vector::Constant(1, ps.intercept);
  } else {
    const auto k = static_cast<std::size_t>(ref.block);
    block_ = &spec.predictor(j).blocks[k];
    current_ = ps.coef[k];
    if (block_->penalized()) inv_nu_sq_ = 1.0 / *ps.nu_sq[k];
  }
  offset_ = etas[j] - contribution(current_);

  switch (family_) {
    case LikelihoodFamily::MultinomialZero: other_eta_ = etas[kOnePredictor]; break;
    case LikelihoodFamily::MultinomialOne: other_eta_ = etas[kZeroPredictor]; break;
    case LikelihoodFamily::Binary: indicator_ = j == kZeroPredictor ? obs.ind0 : obs.ind1; break;
    case LikelihoodFamily::Continuous: {
      const double xi = state.xi();
      const double scale = state.delta_sq / state.sigma_sq();
      precision_ = Vector::Zero(obs.n());
      target_ = Vector::Zero(obs.n());
      for (Eigen::Index c = 0; c < obs.n_cont(); ++c) {
        const Eigen::Index i = obs.cont_index[static_cast<std::size_t>(c)];
        precision_[i] = scale / state.w[c];
        target_[i] = obs.y_dagger[c] - xi * state.w[c];
      }
      break;
    }
  }
}

Vector BlockConditional::contribution(const Vector& beta) const {
  if (!block_) return Vector::Constant(obs_.n(), beta[0]);
  return block_->times(beta);
}

Vector BlockConditional::transpose_times(const Vector& v) const {
  if (!block_) return Vector::Constant(1, v.sum());
  return block_->transpose_times(v);
}

Matrix BlockConditional::weighted_gram(const Vector& weights) const {
  if (!block_) return Matrix::Constant(1, 1, weights.sum());
  return block_->weighted_gram(weights);
}

Vector BlockConditional::eta_at(const Vector& beta) const { return offset_ + contribution(beta); }

double BlockConditional::log_density(const Vector& beta) const {
  const Vector eta = eta_at(beta);
  double value = 0.0;
  switch (family_) {
    case LikelihoodFamily::MultinomialZero:
      value = discrete_loglik_eta(spec_.inflation, obs_, eta, other_eta_);
      break;
    case LikelihoodFamily::MultinomialOne:
      value = discrete_loglik_eta(spec_.inflation, obs_, other_eta_, eta);
      break;
    case LikelihoodFamily::Binary:
      value = discrete_loglik_eta(spec_.inflation, obs_, eta, eta);
      break;
    case LikelihoodFamily::Continuous:
      value = -0.5 * (precision_.array() * (target_ - eta).array().square()).sum();
      break;
  }
  if (inv_nu_sq_ > 0.0) value -= 0.5 * inv_nu_sq_ * beta.dot(block_->penalty * beta);
  return value;
}

GradHess BlockConditional::score_fisher(const Vector& beta) const {
  const Eigen::Index n = obs_.n();
  const Vector eta = eta_at(beta);
  Vector gradient(n);
  Vector curvature(n);
  switch (family_) {
    case LikelihoodFamily::MultinomialZero:
    case LikelihoodFamily::MultinomialOne: {
      const bool zero = family_ == LikelihoodFamily::MultinomialZero;
      const Vector& ind = zero ? obs_.ind0 : obs_.ind1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double p = std::exp(eta[i] - log1p_exp2(eta[i], other_eta_[i]));
        gradient[i] = ind[i] - p;
        curvature[i] = p * (1.0 - p);
      }
      break;
    }
    case LikelihoodFamily::Binary:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double p = logistic(eta[i]);
        gradient[i] = indicator_[i] - p;
        curvature[i] = p * (1.0 - p);
      }
      break;
    case LikelihoodFamily::Continuous:
      gradient = precision_.cwiseProduct(target_ - eta);
      break;
  }

  GradHess out;
  out.score = transpose_times(gradient);
  if (family_ == LikelihoodFamily::Continuous) {
    if (!fixed_fisher_) fixed_fisher_ = weighted_gram(precision_);
    out.fisher = *fixed_fisher_;
  } else {
    out.fisher = weighted_gram(curvature);
  }
  if (inv_nu_sq_ > 0.0) {
    out.score -= inv_nu_sq_ * (block_->penalty * beta);
    out.fisher += inv_nu_sq_ * block_->penalty;
  }
  return out;
}

GradHess score_fisher(const ModelSpec& spec, const ObservationSet& obs, const ModelState& state, BlockRef ref) {
  const auto etas = all_linear_predictors(spec, state, obs.n());
  const BlockConditional conditional(spec, obs, state, ref, etas);
  GradHess gh = conditional.score_fisher(conditional.current());
  if (!all_finite(gh)) throw SamplerAbort("non-finite score or Fisher information", -1, block_label(spec, ref));
  return gh;
}

// ---------------------------------------------------------------------------
// Dual averaging

DualAveraging DualAveraging::start(double eps_init, double target) {
  DualAveraging da;
  da.mu = std::log(10.0 * eps_init);
  da.log_eps = std::log(eps_init);
  da.log_eps_bar = 0.0;
  da.target = target;
  return da;
}

double DualAveraging::update(double accept_prob) {
  ++t;
  const double td = static_cast<double>(t);
  const double w = 1.0 / (td + t0);
  h_bar = (1.0 - w) * h_bar + w * (target - accept_prob);
  log_eps = mu - std::sqrt(td) / gamma * h_bar;
  const double eta = std::pow(td, -kappa);
  log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
  return std::exp(log_eps);
}

double DualAveraging::final_step_size() const { return std::exp(t > 0 ? log_eps_bar : log_eps); }

// ---------------------------------------------------------------------------
// IWLS Metropolis-Hastings

std::optional<Eigen::LLT<Matrix>> jittered_cholesky(const Matrix& fisher) {
  if (!fisher.allFinite()) return std::nullopt;
  Eigen::LLT<Matrix> llt(fisher);
  if (llt.info() == Eigen::Success) return llt;
  const double base = fisher.diagonal().mean();
  if (!(base > 0.0)) return std::nullopt;
  const Eigen::Index d = fisher.rows();
  for (double factor = 1e-8; factor <= 1e-2 * (1.0 + 1e-9); factor *= 10.0) {
    llt.compute(fisher + factor * base * Matrix::Identity(d, d));
    if (llt.info() == Eigen::Success) return llt;
  }
  return std::nullopt;
}

namespace {

struct Proposal {
  Eigen::LLT<Matrix> chol;
  Vector mean;
  double log_det_l;  // sum log diag(L)
};

std::optional<Proposal> proposal_at(const BlockConditional& target, const Vector& beta, double eps) {
  const GradHess gh = target.score_fisher(beta);
  if (!all_finite(gh)) return std::nullopt;
  auto chol = jittered_cholesky(gh.fisher);
  if (!chol) return std::nullopt;
  Proposal p{*chol, beta + 0.5 * eps * eps * chol->solve(gh.score), 0.0};
  p.log_det_l = p.chol.matrixLLT().diagonal().array().log().sum();
  return p;
}

// log N(x; mean, eps^2 F^{-1}) without the 2*pi term.
double proposal_log_density(const Proposal& p, const Vector& x, double eps) {
  const Vector u = p.chol.matrixU() * (x - p.mean);
  return p.log_det_l - static_cast<double>(x.size()) * std::log(eps) - 0.5 * u.squaredNorm() / (eps * eps);
}

}  // namespace

MhResult iwls_mh_update(const BlockUpdater& updater, const BlockConditional& target, Rng& rng) {
  const double eps = updater.step_size;
  const Vector& beta = target.current();
  const auto forward = proposal_at(target, beta, eps);
  if (!forward) {
    throw SamplerAbort("Fisher information not positive definite after jitter", -1, updater.label);
  }
  Vector z(beta.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  const Vector proposed = forward->mean + eps * forward->chol.matrixU().solve(z);

  MhResult result{beta, false, 0.0};
  const double lp_proposed = target.log_density(proposed);
  if (!std::isfinite(lp_proposed)) return result;
  const auto backward = proposal_at(target, proposed, eps);
  if (!backward) return result;

  const double log_ratio = lp_proposed - target.log_density(beta) + proposal_log_density(*backward, beta, eps) -
                           proposal_log_density(*forward, proposed, eps);
  if (std::isnan(log_ratio)) return result;
  result.accept_prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  if (rng.uniform() < result.accept_prob) {
    result.beta = proposed;
    result.accepted = true;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gibbs updates

InverseGammaParams smoothing_variance_conditional(const Vector& beta, const Matrix& K, int rank, double a, double b) {
  if (rank <= 0) throw std::logic_error("unpenalised blocks carry no smoothing variance");
  return {a + 0.5 * rank, b + 0.5 * beta.dot(K * beta)};
}

double gibbs_smoothing_variance(const Vector& beta, const Matrix& K, int rank, double a, double b, Rng& rng) {
  const auto params = smoothing_variance_conditional(beta, K, rank, a, b);
  return 1.0 / rng.gamma(params.shape, params.scale);
}

double sample_inverse_gaussian(double mu, double lambda, Rng& rng) {
  if (!(mu > 0.0 && lambda > 0.0)) throw DomainError("inverse Gaussian parameters must be positive");
  const double v = rng.normal();
  const double mu_y = mu * v * v;
  // Larger root of the quadratic; the smaller one is mu^2 / larger, which
  // avoids cancellation when mu * y / lambda is large.
  const double larger = mu + mu * mu_y / (2.0 * lambda) + mu / (2.0 * lambda) * std::sqrt(4.0 * mu_y * lambda + mu_y * mu_y);
  const double smaller = mu * (mu / larger);
  return rng.uniform() <= mu / (mu + smaller) ? smaller : larger;
}

LatentWeightsDraw gibbs_latent_weights(const ModelState& state, const ObservationSet& obs, const Vector& eta2,
                                       Rng& rng) {
  const double xi = state.xi();
  const double sigma_sq = state.sigma_sq();
  const double numerator = xi * xi + 2.0 * sigma_sq;
  const double lambda = state.delta_sq * numerator / sigma_sq;
  LatentWeightsDraw draw;
  draw.w.resize(obs.n_cont());
  for (Eigen::Index c = 0; c < obs.n_cont(); ++c) {
    double r = obs.y_dagger[c] - eta2[obs.cont_index[static_cast<std::size_t>(c)]];
    if (std::abs(r) < 1e-12) {
      r = r < 0.0 ? -1e-12 : 1e-12;
      ++draw.n_clamped;
    }
    const double mu = std::sqrt(numerator) / std::abs(r);
    draw.w[c] = 1.0 / sample_inverse_gaussian(mu, lambda, rng);
  }
  return draw;
}

GammaParams delta_sq_conditional(const ModelState& state, const ObservationSet& obs, const Vector& eta2, double a0,
                                 double b0) {
  const double xi = state.xi();
  const double sigma_sq = state.sigma_sq();
  double rate = b0;
  for (Eigen::Index c = 0; c < obs.n_cont(); ++c) {
    const double w = state.w[c];
    const double r = obs.y_dagger[c] - eta2[obs.cont_index[static_cast<std::size_t>(c)]] - xi * w;
    rate += w + r * r / (2.0 * sigma_sq * w);
  }
  return {a0 + 1.5 * static_cast<double>(obs.n_cont()), rate};
}

double gibbs_delta_sq(const ModelState& state, const ObservationSet& obs, const Vector& eta2, double a0, double b0,
                      Rng& rng) {
  const auto params = delta_sq_conditional(state, obs, eta2, a0, b0);
  return rng.gamma(params.shape, params.rate);
}

}  // namespace inflaquant
