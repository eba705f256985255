#include "inflaquant/model_core.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "inflaquant/errors.hpp"

namespace inflaquant {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 + e^a + e^b)
double log1p_exp2(double a, double b) {
  const double m = std::max({0.0, a, b});
  return m + std::log(std::exp(-m) + std::exp(a - m) + std::exp(b - m));
}

void require_finite(const Vector& eta, const char* name) {
  if (!eta.allFinite()) throw DomainError(std::string("non-finite linear predictor ") + name);
}

}  // namespace

std::string to_string(InflationKind kind) {
  switch (kind) {
    case InflationKind::ZeroOnly: return "zero";
    case InflationKind::OneOnly: return "one";
    case InflationKind::ZeroAndOne: return "zero_and_one";
  }
  return "unknown";
}

InflationKind inflation_kind_from_string(const std::string& name) {
  if (name == "zero") return InflationKind::ZeroOnly;
  if (name == "one") return InflationKind::OneOnly;
  if (name == "zero_and_one") return InflationKind::ZeroAndOne;
  throw ValidationError("unknown inflation kind '" + name + "' (expected zero, one or zero_and_one)");
}

bool ModelSpec::has_predictor(int j) const {
  if (j == kZeroPredictor) return has_zero(inflation);
  if (j == kOnePredictor) return has_one(inflation);
  return j == kContinuousPredictor;
}

const PredictorSpec& ModelSpec::predictor(int j) const {
  if (j == kZeroPredictor) return discrete0;
  if (j == kOnePredictor) return discrete1;
  return continuous;
}

void ModelSpec::validate(Eigen::Index n) const {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must lie in (0, 1)");
  if (!(delta_prior_a > 0.0 && delta_prior_b > 0.0)) throw ValidationError("delta^2 prior parameters must be positive");
  for (int j = 0; j < 3; ++j) {
    if (!has_predictor(j)) {
      if (!predictor(j).blocks.empty()) {
        throw ValidationError("predictor " + std::to_string(j) + " has terms but its category is not modelled");
      }
      continue;
    }
    for (const auto& block : predictor(j).blocks) {
      if (block.n_rows() != n) {
        throw ValidationError("block '" + block.label + "' has " + std::to_string(block.n_rows()) +
                              " rows, expected " + std::to_string(n));
      }
      if (block.penalty.rows() != block.n_coef() || block.penalty.cols() != block.n_coef()) {
        throw ValidationError("block '" + block.label + "' penalty has the wrong shape");
      }
      if (block.penalized() && !(block.hyper_a > 0.0 && block.hyper_b > 0.0)) {
        throw ValidationError("block '" + block.label + "' hyperparameters must be positive");
      }
      if (!block.basis.allFinite()) throw ValidationError("block '" + block.label + "' basis is not finite");
    }
  }
}

double ald_xi(double tau) { return (1.0 - 2.0 * tau) / (tau * (1.0 - tau)); }
double ald_sigma_sq(double tau) { return 2.0 / (tau * (1.0 - tau)); }

ObservationSet partition_observations(const Vector& y, InflationKind inflation) {
  ObservationSet obs;
  const Eigen::Index n = y.size();
  obs.y = y;
  obs.ind0 = Vector::Zero(n);
  obs.ind1 = Vector::Zero(n);
  obs.ind_c = Vector::Zero(n);
  std::vector<double> y_dagger;
  long n_extreme = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = y[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw DataValidationError("response must lie in [0, 1]", static_cast<long>(i));
    }
    if (v == 0.0) {
      if (!has_zero(inflation)) throw DataValidationError("response is 0 but the model has no zero inflation", static_cast<long>(i));
      obs.ind0[i] = 1.0;
    } else if (v == 1.0) {
      if (!has_one(inflation)) throw DataValidationError("response is 1 but the model has no one inflation", static_cast<long>(i));
      obs.ind1[i] = 1.0;
    } else {
      obs.ind_c[i] = 1.0;
      obs.cont_index.push_back(i);
      const double logit = std::log(v) - std::log1p(-v);
      if (std::abs(logit) > 30.0) ++n_extreme;
      y_dagger.push_back(logit);
    }
  }
  obs.y_dagger = Eigen::Map<Vector>(y_dagger.data(), static_cast<Eigen::Index>(y_dagger.size()));
  if (n_extreme > 0) {
    obs.warnings.push_back(std::to_string(n_extreme) + " continuous response(s) have |logit(y)| > 30");
  }
  return obs;
}

CategoryProbs link_probs(InflationKind inflation, const Vector& eta0, const Vector& eta1) {
  CategoryProbs out;
  if (inflation == InflationKind::ZeroAndOne) {
    require_finite(eta0, "eta0");
    require_finite(eta1, "eta1");
    const Eigen::Index n = eta0.size();
    out.p0.resize(n);
    out.p1.resize(n);
    out.p2.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lse = log1p_exp2(eta0[i], eta1[i]);
      out.p0[i] = std::exp(eta0[i] - lse);
      out.p1[i] = std::exp(eta1[i] - lse);
      out.p2[i] = std::exp(-lse);
    }
    return out;
  }
  const bool zero = inflation == InflationKind::ZeroOnly;
  const Vector& eta = zero ? eta0 : eta1;
  require_finite(eta, zero ? "eta0" : "eta1");
  const Vector p = eta.unaryExpr([](double e) { return std::exp(-softplus(-e)); });
  const Vector q = eta.unaryExpr([](double e) { return std::exp(-softplus(e)); });
  out.p0 = zero ? p : Vector::Zero(eta.size());
  out.p1 = zero ? Vector::Zero(eta.size()) : p;
  out.p2 = q;
  return out;
}

double discrete_loglik(const ObservationSet& obs, const Vector& p0, const Vector& p1, const Vector& p2) {
  double total = 0.0;
  auto term = [&](double indicator, double p) {
    if (indicator == 0.0) return true;
    if (!(p > 0.0)) return false;
    total += indicator * std::log(p);
    return true;
  };
  for (Eigen::Index i = 0; i < obs.n(); ++i) {
    if (!term(obs.ind0[i], p0.size() ? p0[i] : 0.0)) return kNegInf;
    if (!term(obs.ind1[i], p1.size() ? p1[i] : 0.0)) return kNegInf;
    if (!term(obs.ind_c[i], p2[i])) return kNegInf;
  }
  return total;
}

double discrete_loglik_eta(InflationKind inflation, const ObservationSet& obs, const Vector& eta0,
                           const Vector& eta1) {
  double total = 0.0;
  const Eigen::Index n = obs.n();
  if (inflation == InflationKind::ZeroAndOne) {
    for (Eigen::Index i = 0; i < n; ++i) {
      total += obs.ind0[i] * eta0[i] + obs.ind1[i] * eta1[i] - log1p_exp2(eta0[i], eta1[i]);
    }
    return total;
  }
  const bool zero = inflation == InflationKind::ZeroOnly;
  const Vector& eta = zero ? eta0 : eta1;
  const Vector& ind = zero ? obs.ind0 : obs.ind1;
  for (Eigen::Index i = 0; i < n; ++i) total += ind[i] * eta[i] - softplus(eta[i]);
  return total;
}

double check_loss(double v, double tau) { return v >= 0.0 ? tau * v : (tau - 1.0) * v; }

double ald_logpdf(double y_dagger, double eta, double delta_sq, double tau) {
  if (!(delta_sq > 0.0)) throw DomainError("ALD precision must be positive");
  return std::log(tau * (1.0 - tau) * delta_sq) - delta_sq * check_loss(y_dagger - eta, tau);
}

double augmented_continuous_loglik(const ModelState& state, const ObservationSet& obs, const Vector& eta2) {
  const double xi = state.xi();
  const double sigma_sq = state.sigma_sq();
  const double log_delta = std::log(state.delta_sq);
  double total = 0.0;
  for (Eigen::Index c = 0; c < obs.n_cont(); ++c) {
    const double w = state.w[c];
    if (!(w > 0.0)) throw DomainError("latent weight must be positive");
    const double variance = w * sigma_sq / state.delta_sq;
    const double r = obs.y_dagger[c] - eta2[obs.cont_index[c]] - xi * w;
    total += -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * r * r / variance;
    total += log_delta - state.delta_sq * w;
  }
  return total;
}

double log_prior_block(const Vector& beta, const Matrix& K, int rank, double nu_sq) {
  if (rank == 0) return 0.0;
  return -0.5 * rank * std::log(nu_sq) - beta.dot(K * beta) / (2.0 * nu_sq);
}

double log_inverse_gamma(double x, double shape, double scale) {
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

double log_gamma_density(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

Vector linear_predictor(const PredictorSpec& spec, double intercept, const std::vector<Vector>& coef,
                        Eigen::Index n) {
  Vector eta = Vector::Constant(n, intercept);
  for (std::size_t k = 0; k < spec.blocks.size(); ++k) eta += spec.blocks[k].times(coef[k]);
  return eta;
}

std::array<Vector, 3> all_linear_predictors(const ModelSpec& spec, const ModelState& state, Eigen::Index n) {
  std::array<Vector, 3> etas;
  for (int j = 0; j < 3; ++j) {
    if (!spec.has_predictor(j)) {
      etas[j] = Vector::Zero(n);
      continue;
    }
    const auto& p = state.predictors[j];
    etas[j] = linear_predictor(spec.predictor(j), p.intercept, p.coef, n);
  }
  return etas;
}

double log_posterior(const ModelSpec& spec, const ObservationSet& obs, const ModelState& state) {
  const std::array<Vector, 3> etas = all_linear_predictors(spec, state, obs.n());
  double total = discrete_loglik_eta(spec.inflation, obs, etas[0], etas[1]);
  total += augmented_continuous_loglik(state, obs, etas[2]);
  for (int j = 0; j < 3; ++j) {
    if (!spec.has_predictor(j)) continue;
    const auto& blocks = spec.predictor(j).blocks;
    const auto& p = state.predictors[j];
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      if (!blocks[k].penalized()) continue;
      const double nu_sq = *p.nu_sq[k];
      total += log_prior_block(p.coef[k], blocks[k].penalty, blocks[k].penalty_rank, nu_sq);
      total += log_inverse_gamma(nu_sq, blocks[k].hyper_a, blocks[k].hyper_b);
    }
  }
  total += log_gamma_density(state.delta_sq, spec.delta_prior_a, spec.delta_prior_b);
  return total;
}

}  // namespace inflaquant
