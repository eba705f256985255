#include "inflaquant/simulation.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>

#include "inflaquant/diagnostics.hpp"
#include "inflaquant/errors.hpp"

namespace inflaquant {
namespace {

double logistic(double e) { return e >= 0.0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e)); }

// Keeps a continuous draw strictly inside (0, 1).
double clamp_open(double y, long& n_clamped) {
  if (y > 0.0 && y < 1.0) return y;
  ++n_clamped;
  return y <= 0.0 ? std::nextafter(0.0, 1.0) : std::nextafter(1.0, 0.0);
}

double gjs_sigma(double x2, long& n_clamped) {
  if (x2 >= 1e-6) return x2;
  ++n_clamped;
  return 1e-6;
}

Vector grid(double lo, double hi, int n) { return Vector::LinSpaced(n, lo, hi); }

}  // namespace

MFunctions m_functions(double x) {
  return {std::sin(3.0 * std::numbers::pi * x) * std::exp(-x), x * x * x, 0.5 * std::exp(-x * x) - 0.2, 1.0};
}

ScenarioProbs scenario_probs(double x1, double x2, double k) {
  const MFunctions a = m_functions(x1);
  const MFunctions b = m_functions(x2);
  const Vector eta0 = Vector::Constant(1, 0.3 * (a.m1 + b.m2) - k);
  const Vector eta1 = Vector::Constant(1, 0.3 * (a.m3 + b.m4) - k);
  const CategoryProbs p = link_probs(InflationKind::ZeroAndOne, eta0, eta1);
  return {p.p0[0], p.p1[0], p.p2[0]};
}

double scenario_eta2(double x1, double x2) { return m_functions(x1).m1 + m_functions(x2).m2; }

double sample_ald(double eta, double delta_sq, double tau, Rng& rng) {
  if (!(delta_sq > 0.0) || !(tau > 0.0 && tau < 1.0)) throw DomainError("sample_ald needs delta^2 > 0 and tau in (0, 1)");
  const double w = rng.exponential(delta_sq);
  const double z = rng.normal();
  return eta + ald_xi(tau) * w + std::sqrt(ald_sigma_sq(tau) * w / delta_sq) * z;
}

double student_t_quantile(double df, double tau) {
  if (!(df > 0.0) || !(tau > 0.0 && tau < 1.0)) throw DomainError("student_t_quantile needs df > 0 and tau in (0, 1)");
  if (tau == 0.5) return 0.0;
  const boost::math::students_t_distribution<double> t(df);
  // Evaluate in the lower tail and reflect so that t(tau) = -t(1 - tau) exactly.
  if (tau > 0.5) return -boost::math::quantile(t, 1.0 - tau);
  return boost::math::quantile(t, tau);
}

double sample_student_t(double df, Rng& rng) {
  const double z = rng.normal();
  return z / std::sqrt(rng.chi_squared(df) / df);
}

// mu e^{s t} / (1 - mu (1 - e^{s t})) written as logistic(logit(mu) + s t).
double gjs_t_quantile(double mu, double sigma, double df, double tau) {
  if (!(mu > 0.0 && mu < 1.0) || !(sigma > 0.0)) throw DomainError("gjs_t_quantile needs mu in (0, 1) and sigma > 0");
  return logistic(std::log(mu) - std::log1p(-mu) + sigma * student_t_quantile(df, tau));
}

double sample_gjs_t(double mu, double sigma, double df, Rng& rng) {
  if (!(mu > 0.0 && mu < 1.0) || !(sigma > 0.0)) throw DomainError("sample_gjs_t needs mu in (0, 1) and sigma > 0");
  return logistic(std::log(mu) - std::log1p(-mu) + sigma * sample_student_t(df, rng));
}

std::string to_string(Scenario s) { return s == Scenario::S1 ? "S1" : "S2"; }

Scenario scenario_from_string(const std::string& name) {
  if (name == "S1" || name == "s1") return Scenario::S1;
  if (name == "S2" || name == "s2") return Scenario::S2;
  throw ValidationError("unknown scenario '" + name + "' (expected S1 or S2)");
}

void ScenarioConfig::validate() const {
  if (n <= 0) throw ValidationError("scenario n must be positive");
  if (!(k > 0.0)) throw ValidationError("scenario k must be positive");
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("scenario tau must lie in (0, 1)");
  if (!(delta_sq > 0.0)) throw ValidationError("scenario delta^2 must be positive");
  if (!(df > 0.0)) throw ValidationError("scenario degrees of freedom must be positive");
}

Covariates draw_covariates(int n, std::uint64_t seed) {
  Rng rng(seed);
  Covariates c{Vector(n), Vector(n)};
  for (int i = 0; i < n; ++i) {
    c.x1[i] = rng.uniform();
    c.x2[i] = rng.uniform();
  }
  return c;
}

Dataset scenario_truth(const ScenarioConfig& config, const Covariates& cov) {
  config.validate();
  const Eigen::Index n = cov.x1.size();
  if (cov.x2.size() != n) throw InvalidDimensionError("x1 and x2 differ in length");
  Dataset d;
  d.x1 = cov.x1;
  d.x2 = cov.x2;
  d.p0.resize(n);
  d.p1.resize(n);
  d.p2.resize(n);
  d.quantile.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ScenarioProbs p = scenario_probs(cov.x1[i], cov.x2[i], config.k);
    d.p0[i] = p.p0;
    d.p1[i] = p.p1;
    d.p2[i] = p.p2;
    const double eta2 = scenario_eta2(cov.x1[i], cov.x2[i]);
    if (config.scenario == Scenario::S1) {
      d.quantile[i] = logistic(eta2);
    } else {
      d.quantile[i] = gjs_t_quantile(logistic(eta2), gjs_sigma(cov.x2[i], d.n_sigma_clamped), config.df, config.tau);
    }
  }
  return d;
}

Dataset generate_scenario(const ScenarioConfig& config, const Covariates& cov, Rng& rng) {
  Dataset d = scenario_truth(config, cov);
  const Eigen::Index n = d.x1.size();
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = rng.uniform();
    if (u < d.p0[i]) {
      d.y[i] = 0.0;
      continue;
    }
    if (u < d.p0[i] + d.p1[i]) {
      d.y[i] = 1.0;
      continue;
    }
    const double eta2 = scenario_eta2(d.x1[i], d.x2[i]);
    double y = 0.0;
    if (config.scenario == Scenario::S1) {
      y = logistic(sample_ald(eta2, config.delta_sq, config.tau, rng));
    } else {
      long unused = 0;
      y = sample_gjs_t(logistic(eta2), gjs_sigma(d.x2[i], unused), config.df, rng);
    }
    d.y[i] = clamp_open(y, d.n_response_clamped);
  }
  return d;
}

Dataset generate_scenario(const ScenarioConfig& config) {
  config.validate();
  Rng rng(config.replicate_seed);
  return generate_scenario(config, draw_covariates(config.n, config.covariate_seed), rng);
}

Dataset generate_s1(const ScenarioConfig& config, Rng& rng) {
  ScenarioConfig c = config;
  c.scenario = Scenario::S1;
  return generate_scenario(c, draw_covariates(c.n, c.covariate_seed), rng);
}

Dataset generate_s2(const ScenarioConfig& config, Rng& rng) {
  ScenarioConfig c = config;
  c.scenario = Scenario::S2;
  return generate_scenario(c, draw_covariates(c.n, c.covariate_seed), rng);
}

ModelSpec build_study_model(const Dataset& data, double tau, const PSplineOptions& options) {
  ModelSpec spec;
  spec.inflation = InflationKind::ZeroAndOne;
  spec.tau = tau;
  for (PredictorSpec* p : {&spec.discrete0, &spec.discrete1, &spec.continuous}) {
    p->blocks.push_back(build_pspline_term("x1", data.x1, options));
    p->blocks.push_back(build_pspline_term("x2", data.x2, options));
  }
  spec.validate(data.x1.size());
  return spec;
}

std::vector<std::string> study_monitored_parameters(const ModelSpec& spec) {
  std::vector<std::string> names;
  for (int j = 0; j < 3; ++j) {
    if (spec.has_predictor(j)) names.push_back(intercept_name(j));
  }
  names.emplace_back(kDeltaSqName);
  return names;
}

StudyResult run_replicate_study(const ScenarioConfig& config, const StudySettings& settings) {
  config.validate();
  settings.run.validate();
  if (settings.n_replicates <= 0 || settings.n_test <= 0) throw ValidationError("study needs replicates and test points");

  const Covariates cov = draw_covariates(config.n, config.covariate_seed);
  const Covariates test = draw_covariates(settings.n_test, settings.test_seed);
  const Dataset test_truth = scenario_truth(config, test);
  const CovariateFrame test_frame{{"x1", test.x1}, {"x2", test.x2}};

  Vector sum_q = Vector::Zero(settings.n_test);
  Vector sum_p0 = Vector::Zero(settings.n_test);
  Vector sum_p1 = Vector::Zero(settings.n_test);

  StudyResult result;
  result.min_ess_bulk = std::numeric_limits<double>::infinity();
  for (int r = 0; r < settings.n_replicates; ++r) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(config.replicate_seed + static_cast<std::uint64_t>(r));
    const Dataset data = generate_scenario(config, cov, rng);
    const ModelSpec spec = build_study_model(data, config.tau, settings.spline);
    const ObservationSet obs = partition_observations(data.y, spec.inflation);
    RunConfig run = settings.run;
    run.base_seed = settings.run.base_seed + static_cast<std::uint64_t>(r);
    const std::vector<ChainDraws> draws = run_chains(spec, obs, run);

    ReplicateMetrics m;
    m.replicate = r;
    m.n_boundary = static_cast<int>(obs.n() - obs.n_cont());
    m.n_sigma_clamped = data.n_sigma_clamped;

    const Matrix q = predict_quantile(draws, spec, test_frame);
    m.quantile_rmse = rmse_curve(test_truth.quantile, q).mean();
    const PredictedProbs probs = predict_probs(draws, spec, test_frame);
    const Vector cq = interval_covers(q, test_truth.quantile, settings.level);
    const Vector c0 = interval_covers(probs.p0, test_truth.p0, settings.level);
    const Vector c1 = interval_covers(probs.p1, test_truth.p1, settings.level);
    sum_q += cq;
    sum_p0 += c0;
    sum_p1 += c1;
    m.coverage_quantile = cq.mean();
    m.coverage_p0 = c0.mean();
    m.coverage_p1 = c1.mean();

    // Discrete effects on a 100-point grid over each covariate's observed range.
    for (int j : {kZeroPredictor, kOnePredictor}) {
      const auto& blocks = spec.predictor(j).blocks;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        const bool is_x1 = blocks[b].recipe.columns.front() == "x1";
        const Vector& x = is_x1 ? data.x1 : data.x2;
        const Vector g = grid(x.minCoeff(), x.maxCoeff(), 100);
        Vector truth(g.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) {
          const MFunctions f = m_functions(g[i]);
          truth[i] = 0.3 * (j == kZeroPredictor ? (is_x1 ? f.m1 : f.m2) : (is_x1 ? f.m3 : f.m4));
        }
        truth.array() -= truth.mean();
        Matrix est = predict_block_effect(draws, spec, j, b, CovariateFrame{{blocks[b].recipe.columns.front(), g}});
        est.colwise() -= est.rowwise().mean();
        m.effect_rmse["pred" + std::to_string(j) + "." + blocks[b].label] = rmse_curve(truth, est).mean();
      }
    }

    for (const auto& name : study_monitored_parameters(spec)) {
      const auto chains = chain_columns(draws, name);
      m.rhat[name] = split_rhat(chains);
      m.ess_bulk[name] = ess_bulk(chains);
      result.max_rhat = std::max(result.max_rhat, m.rhat[name]);
      result.min_ess_bulk = std::min(result.min_ess_bulk, m.ess_bulk[name]);
    }
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.mean_quantile_rmse += m.quantile_rmse;
    result.replicates.push_back(std::move(m));
  }
  const double R = static_cast<double>(settings.n_replicates);
  result.mean_quantile_rmse /= R;
  result.coverage_quantile = (sum_q / R).mean();
  result.coverage_p0 = (sum_p0 / R).mean();
  result.coverage_p1 = (sum_p1 / R).mean();
  return result;
}

}  // namespace inflaquant
