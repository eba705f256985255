#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fixtures.hpp"
#include "inflaquant/diagnostics.hpp"
#include "inflaquant/errors.hpp"
#include "oracles.hpp"

using namespace inflaquant;

namespace {

std::vector<Vector> normal_chains(int m, Eigen::Index n, std::uint64_t seed, double offset_step = 0.0) {
  Rng rng(seed);
  std::vector<Vector> chains;
  for (int c = 0; c < m; ++c) {
    Vector v(n);
    for (auto& x : v) x = rng.normal() + offset_step * c;
    chains.push_back(v);
  }
  return chains;
}

std::vector<Vector> ar1_chains(int m, Eigen::Index n, double phi, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> chains;
  const double innovation = std::sqrt(1.0 - phi * phi);
  for (int c = 0; c < m; ++c) {
    Vector v(n);
    double x = rng.normal();
    for (auto& e : v) {
      x = phi * x + innovation * rng.normal();
      e = x;
    }
    chains.push_back(v);
  }
  return chains;
}

// Draws for a model with one P-spline per predictor, filled by hand.
struct HandDraws {
  ModelSpec spec;
  std::vector<ChainDraws> draws;
  CovariateFrame frame;
};

HandDraws hand_draws(std::uint64_t seed, double coef_scale) {
  Rng rng(seed);
  Vector x(50);
  for (auto& v : x) v = rng.uniform();
  HandDraws h;
  h.spec.tau = 0.5;
  const PSplineOptions spline{6, 3, 2, 0.01, 0.01};
  h.spec.discrete0.blocks.push_back(build_pspline_term("x", x, spline));
  h.spec.discrete1.blocks.push_back(build_pspline_term("x", x, spline));
  h.spec.continuous.blocks.push_back(build_pspline_term("x", x, spline));
  for (int c = 0; c < 2; ++c) {
    ChainDraws d;
    d.chain_id = c;
    for (int j = 0; j < 3; ++j) {
      d.parameter_names.push_back(intercept_name(j));
      for (Eigen::Index l = 0; l < 5; ++l) d.parameter_names.push_back(coefficient_name(j, "s_x", l));
    }
    d.parameter_names.push_back("delta_sq");
    d.values = Matrix(30, static_cast<Eigen::Index>(d.parameter_names.size()));
    for (auto& v : d.values.reshaped()) v = coef_scale * rng.normal();
    d.values.col(d.values.cols() - 1).setOnes();
    d.log_posterior = Vector::Zero(30);
    h.draws.push_back(d);
  }
  Vector grid = Vector::LinSpaced(11, 0.05, 0.95);
  h.frame["x"] = grid;
  return h;
}

}  // namespace

TEST_CASE("split R-hat") {
  CHECK(split_rhat({Vector::Constant(100, 2.0), Vector::Constant(100, 2.0)}) == 1.0);
  CHECK(split_rhat(normal_chains(4, 10000, 1)) < 1.01);
  CHECK(split_rhat(normal_chains(2, 1000, 2, 10.0)) > 2.0);

  // Independent closed-form evaluation on a tiny case.
  const std::vector<Vector> tiny{(Vector(4) << 1, 2, 3, 4).finished(), (Vector(4) << 2, 2, 5, 1).finished()};
  // Halves: {1,2},{3,4},{2,2},{5,1}; means 1.5,3.5,2,3; variances 0.5,0.5,0,8.
  const double W = (0.5 + 0.5 + 0.0 + 8.0) / 4.0;
  const double mbar = (1.5 + 3.5 + 2.0 + 3.0) / 4.0;
  const double B = 2.0 * (std::pow(1.5 - mbar, 2) + std::pow(3.5 - mbar, 2) + std::pow(2.0 - mbar, 2) +
                          std::pow(3.0 - mbar, 2)) / 3.0;
  CHECK(split_rhat(tiny) == doctest::Approx(std::sqrt((W / 2.0 + B / 2.0) / W)));
  CHECK_THROWS_AS(split_rhat({}), ValidationError);
  CHECK_THROWS_AS(split_rhat({Vector::Zero(3), Vector::Zero(4)}), ValidationError);
}

TEST_CASE("bulk ESS") {
  const double iid = ess_bulk(normal_chains(4, 10000, 3));
  CHECK(iid >= 0.8 * 4e4);
  CHECK(iid <= 1.2 * 4e4);

  std::vector<Vector> constant{Vector::Constant(500, 1.0), Vector::Constant(500, 2.0), Vector::Constant(500, 3.0)};
  CHECK(ess_bulk(constant) == 3.0);

  const double phi = 0.9;
  const double n = 4.0 * 20000.0;
  const double expected = n * (1.0 - phi) / (1.0 + phi);
  const auto ar = ar1_chains(4, 20000, phi, 4);
  CHECK(ess_bulk(ar) == doctest::Approx(expected).epsilon(0.3));
  CHECK(ess_mean(ar) == doctest::Approx(expected).epsilon(0.3));
  // MCSE of the mean equals sd / sqrt(ESS).
  CHECK(mcse_mean(ar) == doctest::Approx(1.0 / std::sqrt(expected)).epsilon(0.3));
}

TEST_CASE("credible interval and summary") {
  std::vector<double> v(101);
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), Rng(5));
  const auto [lo, hi] = credible_interval(v, 0.9);
  CHECK(lo == doctest::Approx(5.0));
  CHECK(hi == doctest::Approx(95.0));

  const auto m = fixture::random_model(InflationKind::ZeroAndOne, 6, 0.5);
  RunConfig cfg;
  cfg.n_chains = 2;
  cfg.warmup = 100;
  cfg.draws = 200;
  cfg.max_workers = 1;
  const auto draws = run_chains(m.spec, m.obs, cfg);
  for (double level : {0.5, 0.9}) {
    const auto summary = summarize(draws, level);
    CHECK(summary.size() == draws.front().parameter_names.size());
    for (const auto& s : summary) {
      CAPTURE(s.name);
      CHECK(s.lower <= s.median);
      CHECK(s.median <= s.upper);
      CHECK(s.sd >= 0.0);
      CHECK(s.ess_bulk <= 400.0 * std::log10(400.0));
      CHECK(std::isfinite(s.rhat));
    }
  }
  const auto s = summarize(draws, 0.9);
  const auto delta = std::find_if(s.begin(), s.end(), [](const ParameterSummary& p) { return p.name == "delta_sq"; });
  REQUIRE(delta != s.end());
  std::vector<double> pooled;
  for (const auto& d : draws) {
    const Vector c = d.column("delta_sq");
    pooled.insert(pooled.end(), c.data(), c.data() + c.size());
  }
  CHECK(delta->mean == doctest::Approx(oracle::mean(pooled)));
  CHECK(delta->lower == doctest::Approx(oracle::empirical_quantile(pooled, 0.05)));
  CHECK(delta->upper == doctest::Approx(oracle::empirical_quantile(pooled, 0.95)));
}

TEST_CASE("predictions from zero coefficients") {
  HandDraws h = hand_draws(7, 0.0);
  const Matrix q = predict_quantile(h.draws, h.spec, h.frame);
  CHECK(q.rows() == 60);
  CHECK(q.cols() == 11);
  CHECK((q.array() == 0.5).all());
  const auto p = predict_probs(h.draws, h.spec, h.frame);
  CHECK((p.p0.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
  CHECK((p.p2.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("predictions agree with a direct evaluation") {
  HandDraws h = hand_draws(8, 1.0);
  std::vector<std::string> warnings;
  const Matrix q = predict_quantile(h.draws, h.spec, h.frame, &warnings);
  CHECK(warnings.empty());
  CHECK((q.array() > 0.0).all());
  CHECK((q.array() < 1.0).all());
  const auto p = predict_probs(h.draws, h.spec, h.frame);
  const Matrix basis = h.spec.continuous.blocks[0].basis_at(h.frame);
  const Matrix basis0 = h.spec.discrete0.blocks[0].basis_at(h.frame);
  const Matrix basis1 = h.spec.discrete1.blocks[0].basis_at(h.frame);
  Eigen::Index row = 0;
  for (const auto& d : h.draws) {
    for (Eigen::Index r = 0; r < d.n_draws(); ++r, ++row) {
      for (Eigen::Index k = 0; k < 11; ++k) {
        const auto eta = [&](int j, const Matrix& B) {
          double e = d.values(r, d.index_of(intercept_name(j)));
          for (Eigen::Index l = 0; l < 5; ++l) e += B(k, l) * d.values(r, d.index_of(coefficient_name(j, "s_x", l)));
          return e;
        };
        const double e2 = eta(2, basis);
        CHECK(q(row, k) == doctest::Approx(1.0 / (1.0 + std::exp(-e2))).epsilon(1e-12));
        const double e0 = eta(0, basis0);
        const double e1 = eta(1, basis1);
        CHECK(p.p0(row, k) == doctest::Approx(std::exp(e0) / (1.0 + std::exp(e0) + std::exp(e1))).epsilon(1e-12));
        CHECK(p.p1(row, k) == doctest::Approx(std::exp(e1) / (1.0 + std::exp(e0) + std::exp(e1))).epsilon(1e-12));
      }
    }
  }
  const Matrix effect = predict_block_effect(h.draws, h.spec, 2, 0, h.frame);
  const Matrix eta2 = predict_linear_predictor(h.draws, h.spec, 2, h.frame);
  Vector intercepts(60);
  intercepts << h.draws[0].column("pred2.intercept"), h.draws[1].column("pred2.intercept");
  CHECK(((eta2 - effect).colwise() - intercepts).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("predicted quantiles increase with the intercept") {
  HandDraws h = hand_draws(9, 1.0);
  const Matrix before = predict_quantile(h.draws, h.spec, h.frame);
  for (auto& d : h.draws) d.values.col(d.index_of("pred2.intercept")).array() += 0.5;
  const Matrix after = predict_quantile(h.draws, h.spec, h.frame);
  CHECK(((after - before).array() > 0.0).all());
}

TEST_CASE("out-of-range covariates are clamped with a warning") {
  HandDraws h = hand_draws(10, 1.0);
  CovariateFrame outside;
  outside["x"] = (Vector(2) << -5.0, 7.0).finished();
  std::vector<std::string> warnings;
  const Matrix q = predict_quantile(h.draws, h.spec, outside, &warnings);
  CHECK_FALSE(warnings.empty());
  CHECK(q.allFinite());
}

TEST_CASE("rmse curve") {
  Rng rng(11);
  const Vector truth = Vector::LinSpaced(100, -1.0, 1.0);
  Matrix pred(5, 100);
  for (auto& v : pred.reshaped()) v = rng.normal();
  CHECK(rmse_curve(truth, truth.transpose().replicate(3, 1)).norm() == 0.0);
  const Vector offset = rmse_curve(truth, (truth.array() + 0.3).matrix().transpose().replicate(2, 1));
  CHECK(offset[0] == doctest::Approx(0.3).epsilon(1e-12));

  const Vector r = rmse_curve(truth, pred);
  for (Eigen::Index j = 0; j < 5; ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < 100; ++i) s += (truth[i] - pred(j, i)) * (truth[i] - pred(j, i));
    CHECK(std::abs(r[j] - std::sqrt(s / 100.0)) < 1e-12);
  }
  // Permuting grid points changes nothing.
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(100);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 100, Rng(12));
  const Vector rp = rmse_curve(perm * truth, pred * perm.transpose());
  CHECK((rp - r).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(rmse_curve(truth, Matrix::Zero(2, 3)), InvalidDimensionError);
}

TEST_CASE("coverage rate") {
  const Vector truth = Vector::Zero(4);
  Rng rng(13);
  Matrix around(200, 4);
  for (auto& v : around.reshaped()) v = rng.normal();
  CHECK(coverage_rate({around, around}, truth) == 1.0);
  CHECK(coverage_rate({(around.array() + 10.0).matrix()}, truth) == 0.0);

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  Matrix mixed = around;
  mixed.col(1).array() += 10.0;
  CHECK(coverage_rate({mixed}, truth) == 0.75);
  CHECK(coverage_rate({mixed * perm.transpose()}, perm * truth) == 0.75);
}

TEST_CASE("coverage is calibrated under a known posterior") {
  // Flat prior, x ~ N(theta, 1): posterior N(x, 1), so 95% intervals cover
  // theta with probability 0.95.
  Rng rng(14);
  const Eigen::Index points = 50;
  Vector theta(points);
  for (auto& t : theta) t = 3.0 * rng.normal();
  std::vector<Matrix> replicates;
  for (int r = 0; r < 200; ++r) {
    Matrix draws(1000, points);
    for (Eigen::Index p = 0; p < points; ++p) {
      const double x = theta[p] + rng.normal();
      for (Eigen::Index s = 0; s < 1000; ++s) draws(s, p) = x + rng.normal();
    }
    replicates.push_back(draws);
  }
  CHECK(std::abs(coverage_rate(replicates, theta) - 0.95) < 0.02);
}
