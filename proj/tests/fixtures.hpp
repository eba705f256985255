#pragma once

// Model fixtures and oracle checks shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/inverse_gamma.hpp>

#include "inflaquant/design_matrices.hpp"
#include "inflaquant/model_core.hpp"
#include "inflaquant/rng.hpp"
#include "inflaquant/samplers.hpp"
#include "oracles.hpp"

namespace fixture {

using inflaquant::BlockRef;
using inflaquant::InflationKind;
using inflaquant::Matrix;
using inflaquant::ModelSpec;
using inflaquant::ModelState;
using inflaquant::ObservationSet;
using inflaquant::Rng;
using inflaquant::Vector;

struct Model {
  ModelSpec spec;
  ObservationSet obs;
  ModelState state;
};

// Small model with a P-spline in every present predictor and an extra linear
// term in the continuous one. The state is random, not fitted.
inline Model random_model(InflationKind kind, std::uint64_t seed, double tau = 0.3, Eigen::Index n = 60) {
  Rng rng(seed);
  Vector x(n);
  Vector z(n);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = rng.uniform();
    z[i] = rng.normal();
    const double u = rng.uniform();
    double v = 0.05 + 0.9 * rng.uniform();
    if (u < 0.2 && inflaquant::has_zero(kind)) v = 0.0;
    if (u > 0.8 && inflaquant::has_one(kind)) v = 1.0;
    y[i] = v;
  }
  Model m;
  m.spec.inflation = kind;
  m.spec.tau = tau;
  const inflaquant::PSplineOptions spline{8, 3, 2, 0.01, 0.01};
  if (inflaquant::has_zero(kind)) m.spec.discrete0.blocks.push_back(inflaquant::build_pspline_term("x", x, spline));
  if (inflaquant::has_one(kind)) m.spec.discrete1.blocks.push_back(inflaquant::build_pspline_term("x", x, spline));
  m.spec.continuous.blocks.push_back(inflaquant::build_pspline_term("x", x, spline));
  m.spec.continuous.blocks.push_back(inflaquant::build_linear_term({"z"}, z));
  m.obs = inflaquant::partition_observations(y, kind);

  m.state.tau = tau;
  for (int j = 0; j < 3; ++j) {
    if (!m.spec.has_predictor(j)) continue;
    auto& p = m.state.predictors[j];
    p.intercept = 0.5 * rng.normal();
    for (const auto& b : m.spec.predictor(j).blocks) {
      Vector c(b.n_coef());
      for (auto& v : c) v = 0.5 * rng.normal();
      p.coef.push_back(c);
      p.nu_sq.push_back(b.penalized() ? std::optional<double>(0.2 + rng.uniform()) : std::nullopt);
    }
  }
  m.state.w = Vector(m.obs.n_cont());
  for (auto& v : m.state.w) v = 0.05 + rng.exponential(1.0);
  m.state.delta_sq = 0.5 + 4.0 * rng.uniform();
  return m;
}

inline Vector get_block(const ModelState& s, BlockRef ref) {
  const auto& p = s.predictors[ref.predictor];
  if (ref.block == BlockRef::kIntercept) return Vector::Constant(1, p.intercept);
  return p.coef[static_cast<std::size_t>(ref.block)];
}

inline void set_block(ModelState& s, BlockRef ref, const Vector& beta) {
  auto& p = s.predictors[ref.predictor];
  if (ref.block == BlockRef::kIntercept) {
    p.intercept = beta[0];
  } else {
    p.coef[static_cast<std::size_t>(ref.block)] = beta;
  }
}

inline std::vector<BlockRef> all_blocks(const ModelSpec& spec, int predictor) {
  std::vector<BlockRef> refs{{predictor, BlockRef::kIntercept}};
  for (std::size_t k = 0; k < spec.predictor(predictor).blocks.size(); ++k) refs.push_back({predictor, static_cast<int>(k)});
  return refs;
}

// Max over coordinates of |analytic - fd| / max(|fd|, 1), with the finite
// differences taken on the full augmented log posterior.
inline double score_fd_error(const Model& m, BlockRef ref) {
  const auto gh = inflaquant::score_fisher(m.spec, m.obs, m.state, ref);
  ModelState s = m.state;
  auto f = [&](const Vector& beta) {
    set_block(s, ref, beta);
    return inflaquant::log_posterior(m.spec, m.obs, s);
  };
  const Vector fd = oracle::fd_gradient(f, get_block(m.state, ref));
  double worst = 0.0;
  for (Eigen::Index k = 0; k < fd.size(); ++k) {
    worst = std::max(worst, std::abs(gh.score[k] - fd[k]) / std::max(std::abs(fd[k]), 1.0));
  }
  return worst;
}

// Negative Hessian of the log posterior by central differences of the analytic score.
inline Matrix fd_negative_hessian(const Model& m, BlockRef ref, double h = 1e-5) {
  const Vector beta = get_block(m.state, ref);
  Matrix H(beta.size(), beta.size());
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    ModelState up = m.state;
    ModelState down = m.state;
    Vector bu = beta;
    Vector bd = beta;
    bu[k] += h;
    bd[k] -= h;
    set_block(up, ref, bu);
    set_block(down, ref, bd);
    const Vector su = inflaquant::score_fisher(m.spec, m.obs, up, ref).score;
    const Vector sd = inflaquant::score_fisher(m.spec, m.obs, down, ref).score;
    H.col(k) = -(su - sd) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

// Normalises the augmented log posterior over a 1-D grid of one scalar
// parameter and compares it pointwise with a reference density normalised on
// the same grid. Returns the largest absolute difference relative to the peak.
template <class Setter, class Density>
double grid_conjugacy_error(const Model& m, const std::vector<double>& grid, Setter set, Density reference) {
  std::vector<double> lp;
  std::vector<double> lref;
  ModelState s = m.state;
  for (double g : grid) {
    set(s, g);
    lp.push_back(inflaquant::log_posterior(m.spec, m.obs, s));
    lref.push_back(std::log(reference(g)));
  }
  const auto a = oracle::grid_density(grid, lp);
  const auto b = oracle::grid_density(grid, lref);
  const double peak = *std::max_element(b.begin(), b.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / peak);
  return worst;
}

inline std::vector<double> quantile_grid(double lo, double hi, int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return g;
}

// nu^2 of block k of predictor j versus the inverse-gamma the sampler uses.
inline double smoothing_variance_conjugacy_error(const Model& m, int j, std::size_t k) {
  const auto& block = m.spec.predictor(j).blocks[k];
  const auto params = inflaquant::smoothing_variance_conditional(m.state.predictors[j].coef[k], block.penalty,
                                                                 block.penalty_rank, block.hyper_a, block.hyper_b);
  const boost::math::inverse_gamma_distribution<double> ig(params.shape, params.scale);
  const auto grid = quantile_grid(boost::math::quantile(ig, 1e-4), boost::math::quantile(ig, 1.0 - 1e-4), 801);
  return grid_conjugacy_error(
      m, grid, [&](ModelState& s, double v) { s.predictors[j].nu_sq[k] = v; },
      [&](double v) { return boost::math::pdf(ig, v); });
}

inline double delta_sq_conjugacy_error(const Model& m) {
  const auto etas = inflaquant::all_linear_predictors(m.spec, m.state, m.obs.n());
  const auto params = inflaquant::delta_sq_conditional(m.state, m.obs, etas[2], m.spec.delta_prior_a, m.spec.delta_prior_b);
  const boost::math::gamma_distribution<double> g(params.shape, 1.0 / params.rate);
  const auto grid = quantile_grid(boost::math::quantile(g, 1e-4), boost::math::quantile(g, 1.0 - 1e-4), 801);
  return grid_conjugacy_error(
      m, grid, [](ModelState& s, double v) { s.delta_sq = v; }, [&](double v) { return boost::math::pdf(g, v); });
}

}  // namespace fixture
