// Acceptance gate. Prints one PASS/FAIL line per criterion; exit status 1 if any fails.
// Arguments select a subset of criteria by number; none runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "fixtures.hpp"
#include "inflaquant/diagnostics.hpp"
#include "inflaquant/engine.hpp"
#include "inflaquant/io.hpp"
#include "inflaquant/simulation.hpp"
#include "oracles.hpp"

using namespace inflaquant;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double rho(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

// CDF of eta + ALD noise with precision delta_sq: density tau(1-tau) delta_sq exp(-delta_sq rho(y - eta)).
double ald_cdf(double y, double eta, double delta_sq, double tau) {
  const double u = (y - eta) * delta_sq;
  return u < 0.0 ? tau * std::exp((1.0 - tau) * u) : 1.0 - (1.0 - tau) * std::exp(-tau * u);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const double delta_sq = 9.0;
  const double eta = 0.4;
  bool pass = true;
  std::string detail;
  for (double tau : {0.1, 0.5, 0.9}) {
    Rng rng(1000 + static_cast<std::uint64_t>(tau * 10));
    std::vector<double> x(1000000);
    for (double& v : x) v = sample_ald(eta, delta_sq, tau, rng);
    const double p = oracle::ks_pvalue(x, [&](double t) { return ald_cdf(t, eta, delta_sq, tau); });
    const double q = oracle::empirical_quantile(x, tau);
    const bool ok = p > 0.01 && std::abs(q - eta) <= 0.01;
    pass = pass && ok;
    detail += fmt("tau=%.1f KS p=%.3f ", tau, p) + fmt("quantile-eta=%+.4f; ", q - eta);
  }
  return {pass, detail};
}

Outcome criterion2() {
  double worst_nu = 0.0;
  double worst_delta = 0.0;
  const InflationKind kinds[] = {InflationKind::ZeroAndOne, InflationKind::ZeroOnly, InflationKind::OneOnly,
                                 InflationKind::ZeroAndOne, InflationKind::ZeroAndOne};
  for (int s = 0; s < 5; ++s) {
    const auto m = fixture::random_model(kinds[s], 500 + static_cast<std::uint64_t>(s), 0.15 + 0.15 * s, 80);
    for (int j = 0; j < 3; ++j) {
      if (!m.spec.has_predictor(j)) continue;
      for (std::size_t k = 0; k < m.spec.predictor(j).blocks.size(); ++k) {
        if (m.spec.predictor(j).blocks[k].penalized()) {
          worst_nu = std::max(worst_nu, fixture::smoothing_variance_conjugacy_error(m, j, k));
        }
      }
    }
    worst_delta = std::max(worst_delta, fixture::delta_sq_conjugacy_error(m));
  }
  return {worst_nu < 1e-8 && worst_delta < 1e-8,
          fmt("max normalized density gap nu^2 %.2e, delta^2 %.2e (tolerance 1e-8, 5 states)", worst_nu, worst_delta)};
}

Outcome criterion3() {
  struct Case {
    const char* name;
    InflationKind kind;
    int predictor;
  };
  const Case cases[] = {{"multinomial zero", InflationKind::ZeroAndOne, 0},
                        {"multinomial one", InflationKind::ZeroAndOne, 1},
                        {"binary", InflationKind::ZeroOnly, 0},
                        {"binary", InflationKind::OneOnly, 1},
                        {"continuous", InflationKind::ZeroAndOne, 2}};
  double worst = 0.0;
  std::string detail;
  for (const Case& c : cases) {
    double case_worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto m = fixture::random_model(c.kind, 700 + seed, 0.1 + 0.08 * static_cast<double>(seed));
      for (const BlockRef ref : fixture::all_blocks(m.spec, c.predictor)) {
        case_worst = std::max(case_worst, fixture::score_fd_error(m, ref));
      }
    }
    worst = std::max(worst, case_worst);
    detail += std::string(c.name) + fmt(" %.1e; ", case_worst);
  }
  return {worst < 1e-5, "max relative error " + detail + "(tolerance 1e-5, 10 states each)"};
}

Outcome criterion4() {
  const double tau = 0.3;
  const int n = 60;
  Rng rng(4242);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    if (i < 12) {
      y[i] = 0.0;
    } else if (i < 21) {
      y[i] = 1.0;
    } else {
      y[i] = 1.0 / (1.0 + std::exp(-(0.4 + 0.8 * rng.normal())));
    }
  }
  ModelSpec spec;
  spec.inflation = InflationKind::ZeroAndOne;
  spec.tau = tau;
  const ObservationSet obs = partition_observations(y, spec.inflation);

  // Discrete intercepts: flat prior, multinomial likelihood on a dense 2-D grid.
  const double n0 = 12, n1 = 9, n2 = n - 21;
  const double c0 = std::log(n0 / n2), c1 = std::log(n1 / n2);
  const int g = 801;
  const double half = 3.0;
  double z = 0.0, m0 = 0.0, m1 = 0.0, peak = -INFINITY;
  std::vector<double> logp(static_cast<std::size_t>(g) * g);
  for (int a = 0; a < g; ++a) {
    for (int b = 0; b < g; ++b) {
      const double b0 = c0 - half + 2 * half * a / (g - 1);
      const double b1 = c1 - half + 2 * half * b / (g - 1);
      const double lp = n0 * b0 + n1 * b1 - n * std::log1p(std::exp(b0) + std::exp(b1));
      logp[static_cast<std::size_t>(a) * g + b] = lp;
      peak = std::max(peak, lp);
    }
  }
  for (int a = 0; a < g; ++a) {
    for (int b = 0; b < g; ++b) {
      const double wa = (a == 0 || a == g - 1) ? 0.5 : 1.0;
      const double wb = (b == 0 || b == g - 1) ? 0.5 : 1.0;
      const double p = wa * wb * std::exp(logp[static_cast<std::size_t>(a) * g + b] - peak);
      z += p;
      m0 += p * (c0 - half + 2 * half * a / (g - 1));
      m1 += p * (c1 - half + 2 * half * b / (g - 1));
    }
  }
  const double truth0 = m0 / z, truth1 = m1 / z;

  // Continuous intercept: delta^2 integrated out analytically, beta by 1-D quadrature.
  std::vector<double> yd;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] > 0.0 && y[i] < 1.0) yd.push_back(logit(y[i]));
  }
  const double shape = spec.delta_prior_a + static_cast<double>(yd.size());
  auto log_marginal = [&](double beta) {
    double s = spec.delta_prior_b;
    for (double v : yd) s += rho(v - beta, tau);
    return -shape * std::log(s);
  };
  const double centre = oracle::empirical_quantile(yd, tau);
  const int gq = 40001;
  double zq = 0.0, mq = 0.0;
  const double top = log_marginal(centre);
  for (int i = 0; i < gq; ++i) {
    const double beta = centre - 4.0 + 8.0 * i / (gq - 1);
    const double w = (i == 0 || i == gq - 1) ? 0.5 : 1.0;
    const double p = w * std::exp(log_marginal(beta) - top);
    zq += p;
    mq += p * beta;
  }
  const double truth2 = mq / zq;

  RunConfig run;
  run.n_chains = 4;
  run.warmup = 1000;
  run.draws = 2000;
  run.base_seed = 44;
  run.max_workers = 1;
  const auto draws = run_chains(spec, obs, run);
  bool pass = true;
  std::string detail;
  const double truths[] = {truth0, truth1, truth2};
  for (int j = 0; j < 3; ++j) {
    const auto chains = chain_columns(draws, "pred" + std::to_string(j) + ".intercept");
    double mean = 0.0;
    Eigen::Index count = 0;
    for (const auto& c : chains) {
      mean += c.sum();
      count += c.size();
    }
    mean /= static_cast<double>(count);
    const double se = mcse_mean(chains);
    const double zscore = (mean - truths[j]) / se;
    pass = pass && std::abs(zscore) < 2.0;
    detail += "beta" + std::to_string(j) + "0 " + fmt("%.4f vs %.4f ", mean, truths[j]) + fmt("(%+.2f MCSE); ", zscore);
  }
  return {pass, detail};
}

Outcome study_outcome(const StudyResult& r, bool with_probs) {
  bool pass = r.mean_quantile_rmse < 0.05;
  auto in_band = [](double c) { return c >= 0.88 && c <= 0.99; };
  pass = pass && in_band(r.coverage_quantile);
  if (with_probs) pass = pass && in_band(r.coverage_p0) && in_band(r.coverage_p1);
  return {pass, fmt("mean RMSE %.4f (< 0.05), coverage Q %.3f", r.mean_quantile_rmse, r.coverage_quantile) +
                    fmt(", p0 %.3f, p1 %.3f (each in [0.88, 0.99])", r.coverage_p0, r.coverage_p1)};
}

StudySettings study_settings() {
  StudySettings s;
  s.n_replicates = 20;
  s.n_test = 100;
  s.run.n_chains = 4;
  s.run.warmup = 1500;
  s.run.draws = 5000;
  s.run.base_seed = 2024;
  return s;
}

const StudyResult& s1_study() {
  static const StudyResult result = [] {
    ScenarioConfig c;
    c.scenario = Scenario::S1;
    c.n = 500;
    c.k = 1.0;
    c.tau = 0.5;
    c.replicate_seed = 100;
    c.covariate_seed = 0;
    return run_replicate_study(c, study_settings());
  }();
  return result;
}

Outcome criterion5() { return study_outcome(s1_study(), true); }

Outcome criterion6() {
  bool pass = true;
  std::string detail;
  for (double tau : {0.5, 0.1, 0.9}) {
    ScenarioConfig c;
    c.scenario = Scenario::S2;
    c.n = 500;
    c.k = 1.0;
    c.tau = tau;
    c.replicate_seed = 300;
    const StudyResult r = run_replicate_study(c, study_settings());
    const double lo = tau == 0.5 ? 0.88 : 0.75;
    const bool ok = r.coverage_quantile >= lo && r.coverage_quantile <= 0.99;
    pass = pass && ok;
    detail += fmt("tau=%.1f coverage Q %.3f in [%.2f, 0.99]; ", tau, r.coverage_quantile, lo);
  }
  return {pass, detail};
}

// Minimizer of mean check loss for y ~ b0 + b1 x by subgradient descent; best iterate kept.
std::pair<double, double> awad_subgradient(const std::vector<double>& x, const std::vector<double>& y, double tau) {
  const std::size_t n = x.size();
  auto objective = [&](double b0, double b1) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += rho(y[i] - b0 - b1 * x[i], tau);
    return s / static_cast<double>(n);
  };
  double b0 = 0.0, b1 = 0.0;
  double best0 = b0, best1 = b1, best = objective(b0, b1);
  for (int k = 0; k < 60000; ++k) {
    double g0 = 0.0, g1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double psi = tau - (y[i] - b0 - b1 * x[i] < 0.0 ? 1.0 : 0.0);
      g0 -= psi;
      g1 -= psi * x[i];
    }
    g0 /= static_cast<double>(n);
    g1 /= static_cast<double>(n);
    const double step = 0.5 / std::sqrt(1.0 + k);
    b0 -= step * g0;
    b1 -= step * g1;
    const double f = objective(b0, b1);
    if (f < best) {
      best = f;
      best0 = b0;
      best1 = b1;
    }
  }
  return {best0, best1};
}

Outcome criterion7() {
  const double tau = 0.3;
  const int n = 2000;
  Rng rng(77);
  std::vector<double> x(n), yd;
  std::vector<double> xc;
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = 2.0 * rng.uniform() - 1.0;
    if (i % 20 == 0) {
      y[i] = 0.0;
      continue;
    }
    const double ydag = 0.3 + 1.2 * x[static_cast<std::size_t>(i)] + sample_ald(0.0, 10.0, tau, rng);
    y[i] = 1.0 / (1.0 + std::exp(-ydag));
  }
  ModelSpec spec;
  spec.inflation = InflationKind::ZeroOnly;
  spec.tau = tau;
  Matrix xm(n, 1);
  for (int i = 0; i < n; ++i) xm(i, 0) = x[static_cast<std::size_t>(i)];
  spec.continuous.blocks.push_back(build_linear_term({"x"}, xm));
  const ObservationSet obs = partition_observations(y, spec.inflation);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] > 0.0) {
      yd.push_back(logit(y[i]));
      xc.push_back(x[static_cast<std::size_t>(i)]);
    }
  }

  RunConfig run;
  run.n_chains = 4;
  run.warmup = 1000;
  run.draws = 5000;
  run.base_seed = 71;
  run.max_workers = 1;
  const auto draws = run_chains(spec, obs, run);

  // Continuous-part posterior with w integrated out, at each draw's (beta, delta^2).
  double best = -INFINITY, mode0 = 0.0, mode1 = 0.0;
  for (const auto& d : draws) {
    const Vector b0 = d.column("pred2.intercept");
    const Vector b1 = d.column("pred2.lin_x[0]");
    const Vector ds = d.column("delta_sq");
    for (Eigen::Index t = 0; t < d.n_draws(); ++t) {
      double s = 0.0;
      for (std::size_t i = 0; i < yd.size(); ++i) s += rho(yd[i] - b0[t] - b1[t] * xc[i], tau);
      const double lp = (static_cast<double>(yd.size()) + spec.delta_prior_a - 1.0) * std::log(ds[t]) -
                        ds[t] * (s + spec.delta_prior_b);
      if (lp > best) {
        best = lp;
        mode0 = b0[t];
        mode1 = b1[t];
      }
    }
  }
  const auto [awad0, awad1] = awad_subgradient(xc, yd, tau);
  const double gap = std::max(std::abs(mode0 - awad0), std::abs(mode1 - awad1));
  return {gap < 0.02, fmt("mode (%.4f, %.4f) ", mode0, mode1) + fmt("vs AWAD (%.4f, %.4f), ", awad0, awad1) +
                          fmt("max gap %.4f (< 0.02)", gap)};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion8() {
  ScenarioConfig c;
  c.n = 300;
  const Dataset data = generate_scenario(c);
  const ModelSpec spec = build_study_model(data, c.tau);
  const ObservationSet obs = partition_observations(data.y, spec.inflation);
  const fs::path root = fs::temp_directory_path() / ("inflaquant_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);

  RunConfig run;
  run.n_chains = 4;
  run.warmup = 300;
  run.draws = 500;
  run.base_seed = 8;
  auto write = [&](const std::string& name, int workers) {
    RunConfig r = run;
    r.max_workers = workers;
    for (const auto& d : run_chains(spec, obs, r)) {
      write_chain_csv(root / name / ("chain_" + std::to_string(d.chain_id) + ".csv"), d);
    }
  };
  write("first", 1);
  write("second", 1);
  write("parallel", 4);
  bool pass = true;
  for (int k = 0; k < run.n_chains; ++k) {
    const std::string f = "chain_" + std::to_string(k) + ".csv";
    const std::string ref = read_text(root / "first" / f);
    pass = pass && !ref.empty() && read_text(root / "second" / f) == ref && read_text(root / "parallel" / f) == ref;
  }
  fs::remove_all(root);
  return {pass, "4 chain files byte-identical across two runs and 1 vs 4 workers"};
}

Outcome criterion9() {
  const StudyResult& r = s1_study();
  return {r.max_rhat < 1.05 && r.min_ess_bulk > 400.0,
          fmt("max split R-hat %.4f (< 1.05), min bulk ESS %.0f (> 400) over intercepts and delta^2", r.max_rhat,
              r.min_ess_bulk)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"mixture representation reproduces the ALD", criterion1},
      {"conjugate full conditionals", criterion2},
      {"analytic scores", criterion3},
      {"small-instance posterior oracle", criterion4},
      {"S1 replication", criterion5},
      {"S2 misspecification", criterion6},
      {"AWAD consistency", criterion7},
      {"reproducibility", criterion8},
      {"convergence hygiene", criterion9}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    while (!o.detail.empty() && (o.detail.back() == ' ' || o.detail.back() == ';')) o.detail.pop_back();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
