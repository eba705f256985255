#include "inflaquant/engine.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <optional>
#include <thread>

#include "inflaquant/errors.hpp"
#include "inflaquant/quantiles.hpp"
#include "inflaquant/samplers.hpp"

namespace inflaquant {

void RunConfig::validate() const {
  if (n_chains < 1) throw ValidationError("chains must be positive");
  if (warmup < 0) throw ValidationError("warmup must be non-negative");
  if (draws < 1) throw ValidationError("draws must be positive");
  if (thin < 1) throw ValidationError("thin must be at least 1");
  if (!(initial_step_size > 0.0)) throw ValidationError("initial step size must be positive");
}

Eigen::Index ChainDraws::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < parameter_names.size(); ++i) {
    if (parameter_names[i] == name) return static_cast<Eigen::Index>(i);
  }
  return -1;
}

Vector ChainDraws::column(const std::string& name) const {
  const Eigen::Index idx = index_of(name);
  if (idx < 0) throw std::out_of_range("no parameter named '" + name + "'");
  return values.col(idx);
}

std::string coefficient_name(int predictor, const std::string& block_label, Eigen::Index l) {
  return "pred" + std::to_string(predictor) + "." + block_label + "[" + std::to_string(l) + "]";
}

std::string intercept_name(int predictor) { return "pred" + std::to_string(predictor) + ".intercept"; }

std::string smoothing_variance_name(int predictor, const std::string& block_label) {
  return "nu_sq.pred" + std::to_string(predictor) + "." + block_label;
}

ModelState initialize_state(const ModelSpec& spec, const ObservationSet& obs, Rng& /*rng*/) {
  ModelState state;
  state.tau = spec.tau;
  const double n = static_cast<double>(obs.n());
  const double n0 = obs.ind0.sum();
  const double n1 = obs.ind1.sum();
  const double nc = obs.ind_c.sum();
  // Empty categories get a Haldane-style half count.
  auto log_odds = [n](double boundary, double reference) {
    if (n == 0.0) return 0.0;
    if (boundary == 0.0) return std::log(0.5 / (n - 0.5));
    if (reference == 0.0) return std::log((n - 0.5) / 0.5);
    return std::log(boundary / reference);
  };

  for (int j = 0; j < 3; ++j) {
    if (!spec.has_predictor(j)) continue;
    PredictorState& ps = state.predictors[j];
    for (const auto& block : spec.predictor(j).blocks) {
      ps.coef.push_back(Vector::Zero(block.n_coef()));
      ps.nu_sq.push_back(block.penalized() ? std::optional<double>(10.0) : std::nullopt);
    }
  }
  if (spec.inflation == InflationKind::ZeroAndOne) {
    state.predictors[kZeroPredictor].intercept = log_odds(n0, nc);
    state.predictors[kOnePredictor].intercept = log_odds(n1, nc);
  } else if (spec.inflation == InflationKind::ZeroOnly) {
    state.predictors[kZeroPredictor].intercept = log_odds(n0, n - n0);
  } else {
    state.predictors[kOnePredictor].intercept = log_odds(n1, n - n1);
  }
  if (obs.n_cont() > 0) {
    std::vector<double> yd(obs.y_dagger.data(), obs.y_dagger.data() + obs.y_dagger.size());
    state.predictors[kContinuousPredictor].intercept = quantile_type7(std::move(yd), spec.tau);
  }
  state.delta_sq = 1.0;
  state.w = Vector::Constant(obs.n_cont(), 1.0 / state.delta_sq);
  return state;
}

namespace {

bool in_scope(const RunConfig& config, int predictor) {
  return config.scope == SamplingScope::All || predictor == kContinuousPredictor;
}

}  // namespace

ChainDraws run_chain(const ModelSpec& spec, const ObservationSet& obs, const RunConfig& config, int chain_id) {
  config.validate();
  spec.validate(obs.n());
  Rng rng = Rng::stream(config.base_seed, static_cast<std::uint64_t>(chain_id));
  ModelState state = initialize_state(spec, obs, rng);
  const Eigen::Index n = obs.n();

  ChainDraws out;
  out.chain_id = chain_id;

  std::vector<BlockUpdater> updaters;
  struct PenalizedRef {
    int predictor;
    std::size_t block;
  };
  std::vector<PenalizedRef> penalized;

  for (int j = 0; j < 3; ++j) {
    if (!spec.has_predictor(j) || !in_scope(config, j)) continue;
    const auto& blocks = spec.predictor(j).blocks;
    for (int k = BlockRef::kIntercept; k < static_cast<int>(blocks.size()); ++k) {
      BlockUpdater u;
      u.ref = {j, k};
      u.label = block_label(spec, u.ref);
      u.step_size = config.initial_step_size;
      u.adaptation = DualAveraging::start(config.initial_step_size);
      updaters.push_back(u);
      if (k == BlockRef::kIntercept) {
        out.parameter_names.push_back(intercept_name(j));
      } else {
        for (Eigen::Index l = 0; l < blocks[k].n_coef(); ++l) {
          out.parameter_names.push_back(coefficient_name(j, blocks[k].label, l));
        }
      }
    }
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      if (blocks[k].penalized()) penalized.push_back({j, k});
    }
  }
  for (const auto& p : penalized) {
    out.parameter_names.push_back(smoothing_variance_name(p.predictor, spec.predictor(p.predictor).blocks[p.block].label));
  }
  out.parameter_names.push_back(kDeltaSqName);
  if (config.store_latent) {
    for (Eigen::Index c = 0; c < obs.n_cont(); ++c) out.parameter_names.push_back("w[" + std::to_string(c) + "]");
  }

  const int total = config.warmup + config.draws;
  const Eigen::Index n_rows = config.draws / config.thin;
  out.values.resize(n_rows, static_cast<Eigen::Index>(out.parameter_names.size()));
  out.log_posterior.resize(n_rows);
  Eigen::Index row = 0;
  long n_clamped = 0;

  for (int it = 0; it < total; ++it) {
    const bool warming = it < config.warmup;
    std::array<Vector, 3> etas = all_linear_predictors(spec, state, n);

    for (auto& u : updaters) {
      const BlockConditional conditional(spec, obs, state, u.ref, etas);
      MhResult result;
      try {
        result = iwls_mh_update(u, conditional, rng);
      } catch (const SamplerAbort&) {
        throw SamplerAbort("chain " + std::to_string(chain_id) + ": Fisher information not positive definite",
                           it, u.label);
      }
      if (result.accepted) {
        PredictorState& ps = state.predictors[u.ref.predictor];
        if (u.ref.block == BlockRef::kIntercept) {
          ps.intercept = result.beta[0];
        } else {
          ps.coef[static_cast<std::size_t>(u.ref.block)] = result.beta;
        }
        etas[u.ref.predictor] = conditional.eta_at(result.beta);
      }
      if (warming) {
        u.step_size = u.adaptation.update(result.accept_prob);
        if (it + 1 == config.warmup) u.step_size = u.adaptation.final_step_size();
      } else {
        ++u.attempts;
        if (result.accepted) ++u.accepts;
      }
    }

    for (const auto& p : penalized) {
      const DesignBlock& block = spec.predictor(p.predictor).blocks[p.block];
      PredictorState& ps = state.predictors[p.predictor];
      ps.nu_sq[p.block] =
          gibbs_smoothing_variance(ps.coef[p.block], block.penalty, block.penalty_rank, block.hyper_a, block.hyper_b, rng);
    }

    LatentWeightsDraw latent = gibbs_latent_weights(state, obs, etas[kContinuousPredictor], rng);
    state.w = std::move(latent.w);
    n_clamped += latent.n_clamped;
    state.delta_sq = gibbs_delta_sq(state, obs, etas[kContinuousPredictor], spec.delta_prior_a, spec.delta_prior_b, rng);

    if (warming) continue;
    const int s = it - config.warmup;
    if ((s + 1) % config.thin != 0 || row >= n_rows) continue;

    const double lp = log_posterior(spec, obs, state);
    if (!std::isfinite(lp)) {
      throw SamplerAbort("chain " + std::to_string(chain_id) + ": non-finite log posterior", it, "log_posterior");
    }
    Eigen::Index col = 0;
    for (int j = 0; j < 3; ++j) {
      if (!spec.has_predictor(j) || !in_scope(config, j)) continue;
      const PredictorState& ps = state.predictors[j];
      out.values(row, col++) = ps.intercept;
      for (const auto& beta : ps.coef) {
        out.values.row(row).segment(col, beta.size()) = beta.transpose();
        col += beta.size();
      }
    }
    for (const auto& p : penalized) out.values(row, col++) = *state.predictors[p.predictor].nu_sq[p.block];
    out.values(row, col++) = state.delta_sq;
    if (config.store_latent) {
      out.values.row(row).segment(col, state.w.size()) = state.w.transpose();
      col += state.w.size();
    }
    if (!out.values.row(row).allFinite()) {
      throw SamplerAbort("chain " + std::to_string(chain_id) + ": non-finite parameter value", it, "draws");
    }
    out.log_posterior[row] = lp;
    ++row;
  }

  for (const auto& u : updaters) {
    out.accept_rates[u.label] = u.attempts > 0 ? static_cast<double>(u.accepts) / static_cast<double>(u.attempts) : 0.0;
    out.step_sizes[u.label] = u.step_size;
  }
  if (n_clamped > 0) {
    out.warnings.push_back(std::to_string(n_clamped) + " latent-weight residual(s) clamped to 1e-12");
  }
  for (int j = 0; j < 3; ++j) {
    if (!spec.has_predictor(j)) continue;
    for (const auto& block : spec.predictor(j).blocks) {
      for (const auto& w : block.warnings) out.warnings.push_back(block.label + ": " + w);
    }
  }
  for (const auto& w : obs.warnings) out.warnings.push_back(w);
  return out;
}

int resolve_worker_count(const RunConfig& config) {
  int workers = config.max_workers;
  if (workers <= 0) {
    if (const char* env = std::getenv("INFLAQUANT_THREADS")) workers = std::atoi(env);
  }
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, std::min(workers, config.n_chains));
}

std::vector<ChainDraws> run_chains(const ModelSpec& spec, const ObservationSet& obs, const RunConfig& config) {
  config.validate();
  spec.validate(obs.n());
  const int n_chains = config.n_chains;
  std::vector<std::optional<ChainDraws>> results(static_cast<std::size_t>(n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));
  std::atomic<int> next{0};

  auto worker = [&] {
    for (int c = next++; c < n_chains; c = next++) {
      try {
        results[static_cast<std::size_t>(c)] = run_chain(spec, obs, config, c);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    }
  };
  const int n_workers = resolve_worker_count(config);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }

  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<ChainDraws> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace inflaquant
