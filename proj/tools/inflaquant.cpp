#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inflaquant/diagnostics.hpp"
#include "inflaquant/errors.hpp"
#include "inflaquant/fit_config.hpp"
#include "inflaquant/io.hpp"
#include "inflaquant/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace inflaquant;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitSamplerAbort = 3;

std::string chain_file_name(int chain) { return "chain_" + std::to_string(chain) + ".csv"; }

// Copies the discrete-part columns of `discrete` in front of the continuous-only draws.
ChainDraws merge_discrete(const ChainDraws& discrete, const ChainDraws& continuous) {
  if (discrete.n_draws() != continuous.n_draws()) throw std::logic_error("shared discrete draws differ in length");
  std::vector<Eigen::Index> keep;
  for (std::size_t c = 0; c < discrete.parameter_names.size(); ++c) {
    const auto& name = discrete.parameter_names[c];
    const bool continuous_part = name.rfind("pred2.", 0) == 0 || name.rfind("nu_sq.pred2.", 0) == 0 ||
                                 name == kDeltaSqName || name.rfind("w[", 0) == 0;
    if (!continuous_part) keep.push_back(static_cast<Eigen::Index>(c));
  }
  ChainDraws out = continuous;
  out.parameter_names.clear();
  out.values.resize(continuous.n_draws(), static_cast<Eigen::Index>(keep.size()) + continuous.values.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.parameter_names.push_back(discrete.parameter_names[static_cast<std::size_t>(keep[k])]);
    out.values.col(static_cast<Eigen::Index>(k)) = discrete.values.col(keep[k]);
  }
  out.values.rightCols(continuous.values.cols()) = continuous.values;
  out.parameter_names.insert(out.parameter_names.end(), continuous.parameter_names.begin(),
                             continuous.parameter_names.end());
  for (const auto& [block, rate] : discrete.accept_rates) {
    if (block.rfind("pred2.", 0) != 0) out.accept_rates[block] = rate;
  }
  for (const auto& [block, eps] : discrete.step_sizes) {
    if (block.rfind("pred2.", 0) != 0) out.step_sizes[block] = eps;
  }
  return out;
}

json chain_json(const ChainDraws& d) {
  return {{"id", d.chain_id},
          {"file", chain_file_name(d.chain_id)},
          {"draws", d.n_draws()},
          {"accept_rates", d.accept_rates},
          {"step_sizes", d.step_sizes},
          {"warnings", d.warnings}};
}

struct FitOptions {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<int> warmup;
  std::optional<int> draws;
  std::vector<double> taus;
  bool share_discrete = false;
  std::optional<fs::path> out;
};

int cmd_fit(const FitOptions& o) {
  FitConfig config = load_fit_config(o.config);
  if (o.seed) config.run.base_seed = *o.seed;
  if (o.chains) config.run.n_chains = *o.chains;
  if (o.warmup) config.run.warmup = *o.warmup;
  if (o.draws) config.run.draws = *o.draws;
  if (!o.taus.empty()) config.taus = o.taus;
  if (o.out) config.output_dir = *o.out;
  config.validate();

  const CsvTable table = read_csv(config.data_path);
  const PreparedData data = prepare_training_data(config, table);
  const ObservationSet obs = partition_observations(data.y, config.inflation);
  for (const auto& w : obs.warnings) std::cerr << "warning: " << w << "\n";

  std::vector<ChainDraws> shared;
  std::optional<double> shared_tau;
  for (double tau : config.taus) {
    const auto start = std::chrono::steady_clock::now();
    const ModelSpec spec = build_model_spec(config, data, tau);
    RunConfig run = config.run;
    const bool reuse = o.share_discrete && shared_tau.has_value();
    if (reuse) run.scope = SamplingScope::ContinuousOnly;
    std::vector<ChainDraws> draws = run_chains(spec, obs, run);
    if (o.share_discrete && !shared_tau) {
      shared = draws;
      shared_tau = tau;
    } else if (reuse) {
      for (std::size_t c = 0; c < draws.size(); ++c) draws[c] = merge_discrete(shared[c], draws[c]);
    }

    const fs::path dir = config.output_dir / tau_directory_name(tau);
    fs::create_directories(dir);
    json chains = json::array();
    for (const auto& d : draws) {
      write_chain_csv(dir / chain_file_name(d.chain_id), d);
      chains.push_back(chain_json(d));
      for (const auto& w : d.warnings) std::cerr << "warning: chain " << d.chain_id << ": " << w << "\n";
    }
    json meta;
    meta["version"] = library_version();
    meta["tau"] = tau;
    meta["config"] = config.source;
    meta["config_dir"] = fs::absolute(o.config).parent_path().string();
    meta["data"] = fs::absolute(config.data_path).string();
    meta["run"] = {{"chains", run.n_chains}, {"warmup", run.warmup}, {"draws", run.draws}, {"thin", run.thin},
                   {"store_latent", run.store_latent}};
    meta["seeds"] = {{"base_seed", run.base_seed}, {"rng", "xoshiro256** jump streams, one per chain id"}};
    meta["shared_discrete_from_tau"] = reuse ? json(*shared_tau) : json(nullptr);
    meta["log_post_scope"] = reuse ? "continuous part at fixed discrete values" : "full";
    meta["model"] = describe_model(spec);
    meta["chains"] = chains;
    meta["data_warnings"] = obs.warnings;
    write_json(dir / "meta.json", meta);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("tau=%g: %d chains x %d draws -> %s (%.1fs)\n", tau, run.n_chains,
                static_cast<int>(draws.front().n_draws()), dir.string().c_str(), seconds);
  }
  return kExitOk;
}

// A fit directory is either a tau_* directory or a root holding exactly one of them.
fs::path resolve_fit_dir(const fs::path& path) {
  if (fs::exists(path / "meta.json")) return path;
  std::vector<fs::path> found;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) found.push_back(entry.path());
    }
  }
  if (found.size() == 1) return found.front();
  if (found.empty()) throw ValidationError("no meta.json under '" + path.string() + "'");
  throw ValidationError("'" + path.string() + "' holds several fits; name one tau_* directory");
}

struct LoadedFit {
  json meta;
  FitConfig config;
  PreparedData data;
  ModelSpec spec;
  std::vector<ChainDraws> draws;
};

LoadedFit load_fit(const fs::path& fit) {
  const fs::path dir = resolve_fit_dir(fit);
  LoadedFit f;
  f.meta = read_json(dir / "meta.json");
  f.config = parse_fit_config(f.meta.at("config"), f.meta.at("config_dir").get<std::string>());
  f.config.data_path = f.meta.at("data").get<std::string>();
  f.data = prepare_training_data(f.config, read_csv(f.config.data_path));
  f.spec = build_model_spec(f.config, f.data, f.meta.at("tau").get<double>());
  for (const auto& c : f.meta.at("chains")) {
    ChainDraws d = read_chain_csv(dir / c.at("file").get<std::string>(), c.at("id").get<int>());
    d.accept_rates = c.at("accept_rates").get<std::map<std::string, double>>();
    d.step_sizes = c.at("step_sizes").get<std::map<std::string, double>>();
    f.draws.push_back(std::move(d));
  }
  if (f.draws.empty()) throw ValidationError("fit in '" + dir.string() + "' has no chains");
  return f;
}

void add_summary_columns(CsvTable& out, const std::string& prefix, const Matrix& draws, double level,
                         std::size_t first_row) {
  out.header.insert(out.header.end(), {prefix + "_mean", prefix + "_lower", prefix + "_upper"});
  for (Eigen::Index p = 0; p < draws.cols(); ++p) {
    std::vector<double> column(draws.col(p).data(), draws.col(p).data() + draws.rows());
    const double mean = draws.col(p).mean();
    const auto [lo, hi] = credible_interval(std::move(column), level);
    auto& row = out.rows[first_row + static_cast<std::size_t>(p)];
    row.insert(row.end(), {format_double(mean), format_double(lo), format_double(hi)});
  }
}

int cmd_predict(const fs::path& fit, const fs::path& newdata, double level, const fs::path& out) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("--level must lie in (0, 1)");
  const LoadedFit f = load_fit(fit);
  const CsvTable table = read_csv(newdata);
  const CovariateFrame frame = prepare_new_data(f.config, f.data, table);
  std::vector<std::string> warnings;
  const Matrix q = predict_quantile(f.draws, f.spec, frame, &warnings);
  const PredictedProbs p = predict_probs(f.draws, f.spec, frame, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  CsvTable result;
  result.header = {"row"};
  for (std::size_t r = 0; r < table.rows.size(); ++r) result.rows.push_back({std::to_string(r + 1)});
  add_summary_columns(result, "quantile", q, level, 0);
  add_summary_columns(result, "p0", p.p0, level, 0);
  add_summary_columns(result, "p1", p.p1, level, 0);
  add_summary_columns(result, "p2", p.p2, level, 0);
  write_csv(out, result);
  std::printf("wrote %zu predictions to %s\n", table.rows.size(), out.string().c_str());
  return kExitOk;
}

int cmd_diagnose(const fs::path& fit, double level, const std::optional<fs::path>& out_dir) {
  const LoadedFit f = load_fit(fit);
  const fs::path dir = out_dir ? *out_dir : resolve_fit_dir(fit);
  const auto summaries = summarize(f.draws, level);

  CsvTable table;
  table.header = {"parameter", "mean", "sd", "median", "lower", "upper", "rhat", "ess_bulk"};
  double worst_rhat = 0.0;
  double worst_ess = std::numeric_limits<double>::infinity();
  for (const auto& s : summaries) {
    table.rows.push_back({s.name, format_double(s.mean), format_double(s.sd), format_double(s.median),
                          format_double(s.lower), format_double(s.upper), format_double(s.rhat),
                          format_double(s.ess_bulk)});
    worst_rhat = std::max(worst_rhat, s.rhat);
    worst_ess = std::min(worst_ess, s.ess_bulk);
  }
  write_csv(dir / "summary.csv", table);

  CsvTable accept;
  accept.header = {"chain", "block", "accept_rate", "step_size"};
  for (const auto& d : f.draws) {
    for (const auto& [block, rate] : d.accept_rates) {
      const auto eps = d.step_sizes.find(block);
      accept.rows.push_back({std::to_string(d.chain_id), block, format_double(rate),
                             format_double(eps == d.step_sizes.end() ? std::nan("") : eps->second)});
    }
  }
  write_csv(dir / "acceptance.csv", accept);

  std::printf("%-40s %12s %12s %8s %10s\n", "parameter", "mean", "sd", "rhat", "ess_bulk");
  for (const auto& s : summaries) {
    if (s.name.find('[') != std::string::npos) continue;
    std::printf("%-40s %12.5g %12.5g %8.4f %10.1f\n", s.name.c_str(), s.mean, s.sd, s.rhat, s.ess_bulk);
  }
  std::printf("\nblock acceptance (mean over chains)\n");
  std::map<std::string, std::pair<double, int>> pooled;
  for (const auto& d : f.draws) {
    for (const auto& [block, rate] : d.accept_rates) {
      pooled[block].first += rate;
      pooled[block].second += 1;
    }
  }
  for (const auto& [block, acc] : pooled) std::printf("  %-38s %.3f\n", block.c_str(), acc.first / acc.second);
  std::printf("\nmax R-hat %.4f, min bulk ESS %.1f over %zu parameters (coefficients listed in summary.csv)\n",
              worst_rhat, worst_ess, summaries.size());
  return kExitOk;
}

struct ScenarioOptions {
  std::string scenario = "S1";
  int n = 500;
  double k = 1.0;
  double tau = 0.5;
  std::uint64_t seed = 1;
  std::uint64_t covariate_seed = 0;
};

ScenarioConfig to_scenario(const ScenarioOptions& o) {
  ScenarioConfig c;
  c.scenario = scenario_from_string(o.scenario);
  c.n = o.n;
  c.k = o.k;
  c.tau = o.tau;
  c.replicate_seed = o.seed;
  c.covariate_seed = o.covariate_seed;
  c.validate();
  return c;
}

int cmd_simulate(const ScenarioOptions& o, const fs::path& out) {
  const ScenarioConfig c = to_scenario(o);
  const Dataset d = generate_scenario(c);
  CsvTable data;
  data.header = {"x1", "x2", "y"};
  CsvTable truth;
  truth.header = {"x1", "x2", "p0", "p1", "p2", "quantile"};
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    data.rows.push_back({format_double(d.x1[i]), format_double(d.x2[i]), format_double(d.y[i])});
    truth.rows.push_back({format_double(d.x1[i]), format_double(d.x2[i]), format_double(d.p0[i]),
                          format_double(d.p1[i]), format_double(d.p2[i]), format_double(d.quantile[i])});
  }
  write_csv(out / "data.csv", data);
  write_csv(out / "truth.csv", truth);

  // Ready-to-run config for the generating model structure.
  const json spline_x1 = {{"type", "pspline"}, {"column", "x1"}};
  const json spline_x2 = {{"type", "pspline"}, {"column", "x2"}};
  const json terms = json::array({spline_x1, spline_x2});
  const json config = {{"data", "data.csv"},
                       {"response", "y"},
                       {"inflation", "zero_and_one"},
                       {"tau", json::array({c.tau})},
                       {"predictors", {{"zero", terms}, {"one", terms}, {"continuous", terms}}},
                       {"run", {{"chains", 4}, {"warmup", 1500}, {"draws", 5000}, {"seed", 1}}},
                       {"output", "fit"}};
  write_json(out / "config.json", config);
  std::printf("wrote %d rows (%s, k=%g, tau=%g) to %s", c.n, to_string(c.scenario).c_str(), c.k, c.tau,
              out.string().c_str());
  if (d.n_sigma_clamped > 0) std::printf("; %ld precision values clamped at 1e-6", d.n_sigma_clamped);
  std::printf("\n");
  return kExitOk;
}

int cmd_replicate_study(const ScenarioOptions& o, StudySettings settings, const fs::path& out) {
  const ScenarioConfig c = to_scenario(o);
  const StudyResult r = run_replicate_study(c, settings);
  CsvTable table;
  table.header = {"replicate", "n_boundary", "n_sigma_clamped", "quantile_rmse", "coverage_quantile",
                  "coverage_p0", "coverage_p1", "seconds"};
  const auto& first = r.replicates.front();
  for (const auto& [name, v] : first.effect_rmse) table.header.push_back("rmse." + name);
  for (const auto& [name, v] : first.rhat) table.header.push_back("rhat." + name);
  for (const auto& [name, v] : first.ess_bulk) table.header.push_back("ess_bulk." + name);
  for (const auto& m : r.replicates) {
    std::vector<std::string> row{std::to_string(m.replicate), std::to_string(m.n_boundary),
                                 std::to_string(m.n_sigma_clamped), format_double(m.quantile_rmse),
                                 format_double(m.coverage_quantile), format_double(m.coverage_p0),
                                 format_double(m.coverage_p1), format_double(m.seconds)};
    for (const auto& [name, v] : m.effect_rmse) row.push_back(format_double(v));
    for (const auto& [name, v] : m.rhat) row.push_back(format_double(v));
    for (const auto& [name, v] : m.ess_bulk) row.push_back(format_double(v));
    table.rows.push_back(std::move(row));
  }
  write_csv(out, table);
  std::printf("%s n=%d k=%g tau=%g, %d replicates\n", to_string(c.scenario).c_str(), c.n, c.k, c.tau,
              settings.n_replicates);
  std::printf("mean quantile RMSE %.4f\ncoverage: quantile %.3f, p0 %.3f, p1 %.3f\nmax R-hat %.4f, min bulk ESS %.1f\n",
              r.mean_quantile_rmse, r.coverage_quantile, r.coverage_p0, r.coverage_p1, r.max_rhat, r.min_ess_bulk);
  return kExitOk;
}

void add_scenario_flags(CLI::App* cmd, ScenarioOptions& o) {
  cmd->add_option("--scenario", o.scenario, "S1 (ALD) or S2 (GJS-t, 4 df)")->check(CLI::IsMember({"S1", "S2"}));
  cmd->add_option("--n", o.n, "Sample size")->check(CLI::PositiveNumber);
  cmd->add_option("--k", o.k, "Inflation offset (2.5 small, 1 moderate)");
  cmd->add_option("--tau", o.tau, "Quantile level")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seed", o.seed, "Response seed");
  cmd->add_option("--covariate-seed", o.covariate_seed, "Covariate seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian structured additive quantile regression for zero/one-inflated bounded data"};
  app.require_subcommand(1);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the model for each quantile level in the config");
  fit_cmd->add_option("--config", fit.config, "JSON fit config")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--seed", fit.seed, "Base seed");
  fit_cmd->add_option("--chains", fit.chains, "Number of chains");
  fit_cmd->add_option("--warmup", fit.warmup, "Warmup iterations per chain");
  fit_cmd->add_option("--draws", fit.draws, "Retained iterations per chain");
  fit_cmd->add_option("--tau", fit.taus, "Quantile level(s); overrides the config");
  fit_cmd->add_flag("--share-discrete", fit.share_discrete, "Fit the discrete part once and reuse its draws");
  fit_cmd->add_option("--out", fit.out, "Output directory");

  fs::path predict_fit, predict_data, predict_out = "predictions.csv";
  double predict_level = 0.95;
  auto* predict_cmd = app.add_subcommand("predict", "Posterior quantile and probability curves at new covariates");
  predict_cmd->add_option("--fit", predict_fit, "Fit directory (tau_* or its parent)")->required();
  predict_cmd->add_option("--data", predict_data, "CSV of new covariates")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--level", predict_level, "Credible level");
  predict_cmd->add_option("--out", predict_out, "Output CSV");

  fs::path diagnose_fit;
  std::optional<fs::path> diagnose_out;
  double diagnose_level = 0.9;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "R-hat, bulk ESS and acceptance rates of a fit");
  diagnose_cmd->add_option("--fit", diagnose_fit, "Fit directory (tau_* or its parent)")->required();
  diagnose_cmd->add_option("--level", diagnose_level, "Credible level for the summary");
  diagnose_cmd->add_option("--out", diagnose_out, "Directory for summary.csv and acceptance.csv");

  ScenarioOptions sim;
  fs::path sim_out = "simulated";
  auto* simulate_cmd = app.add_subcommand("simulate", "Draw a synthetic dataset and its truth");
  add_scenario_flags(simulate_cmd, sim);
  simulate_cmd->add_option("--out", sim_out, "Output directory");

  ScenarioOptions study;
  StudySettings settings;
  fs::path study_out = "replicate_metrics.csv";
  auto* study_cmd = app.add_subcommand("replicate-study", "Repeated simulate-fit-evaluate runs");
  add_scenario_flags(study_cmd, study);
  study_cmd->add_option("--replicates", settings.n_replicates, "Number of replicates")->check(CLI::PositiveNumber);
  study_cmd->add_option("--chains", settings.run.n_chains, "Chains per fit");
  study_cmd->add_option("--warmup", settings.run.warmup, "Warmup iterations per chain");
  study_cmd->add_option("--draws", settings.run.draws, "Retained iterations per chain");
  study_cmd->add_option("--chain-seed", settings.run.base_seed, "Base seed for the chains");
  study_cmd->add_option("--out", study_out, "Per-replicate metrics CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit);
    if (predict_cmd->parsed()) return cmd_predict(predict_fit, predict_data, predict_level, predict_out);
    if (diagnose_cmd->parsed()) return cmd_diagnose(diagnose_fit, diagnose_level, diagnose_out);
    if (simulate_cmd->parsed()) return cmd_simulate(sim, sim_out);
    if (study_cmd->parsed()) return cmd_replicate_study(study, settings, study_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const SamplerAbort& e) {
    std::cerr << "sampler aborted: " << e.what() << "\n";
    return kExitSamplerAbort;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed fit metadata: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
