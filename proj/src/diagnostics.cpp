#include "inflaquant/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "inflaquant/errors.hpp"
#include "inflaquant/quantiles.hpp"

namespace inflaquant {
namespace {

std::vector<Vector> split_chains(const std::vector<Vector>& chains) {
  std::vector<Vector> halves;
  for (const auto& c : chains) {
    const Eigen::Index h = c.size() / 2;
    halves.push_back(c.head(h));
    halves.push_back(c.tail(h));
  }
  return halves;
}

double sample_variance(const Vector& x) {
  if (x.size() < 2) return 0.0;
  return (x.array() - x.mean()).square().sum() / static_cast<double>(x.size() - 1);
}

std::vector<Vector> rank_normalize(const std::vector<Vector>& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (Eigen::Index i = 0; i < chains[c].size(); ++i) pooled.emplace_back(chains[c][i], pooled.size());
  }
  const std::size_t S = pooled.size();
  std::vector<std::pair<double, std::size_t>> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> rank(S);
  for (std::size_t i = 0; i < S;) {
    std::size_t j = i;
    while (j + 1 < S && sorted[j + 1].first == sorted[i].first) ++j;
    const double average = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[sorted[k].second] = average;
    i = j + 1;
  }
  const boost::math::normal_distribution<double> normal;
  std::vector<Vector> out;
  std::size_t pos = 0;
  for (const auto& c : chains) {
    Vector z(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      z[i] = boost::math::quantile(normal, (rank[pos++] - 0.375) / (static_cast<double>(S) + 0.25));
    }
    out.push_back(std::move(z));
  }
  return out;
}

// Geyer initial monotone sequence ESS over equal-length chains.
double geyer_ess(const std::vector<Vector>& chains) {
  const auto M = static_cast<Eigen::Index>(chains.size());
  const Eigen::Index N = chains.front().size();
  const double total = static_cast<double>(M * N);
  if (N < 4) return total;

  std::vector<Vector> centered;
  Vector means(M);
  double mean_var = 0.0;
  for (Eigen::Index m = 0; m < M; ++m) {
    means[m] = chains[m].mean();
    centered.push_back(chains[m].array() - means[m]);
    mean_var += sample_variance(chains[m]);
  }
  mean_var /= static_cast<double>(M);
  if (!(mean_var > 0.0)) return static_cast<double>(M);

  double var_plus = mean_var * static_cast<double>(N - 1) / static_cast<double>(N);
  if (M > 1) var_plus += sample_variance(means);

  auto mean_acov = [&](Eigen::Index lag) {
    double acc = 0.0;
    for (const auto& c : centered) {
      acc += c.head(N - lag).dot(c.tail(N - lag)) / static_cast<double>(N);
    }
    return acc / static_cast<double>(M);
  };
  // Biased (divide by N) autocovariances, as in the usual multi-chain estimator.
  auto rho_at = [&](Eigen::Index lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

  std::vector<double> rho_hat(static_cast<std::size_t>(N), 0.0);
  rho_hat[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho_at(1);
  rho_hat[1] = rho_odd;
  Eigen::Index s = 1;
  while (s < N - 4 && rho_even + rho_odd > 0.0) {
    rho_even = rho_at(s + 1);
    rho_odd = rho_at(s + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[static_cast<std::size_t>(s + 1)] = rho_even;
      rho_hat[static_cast<std::size_t>(s + 2)] = rho_odd;
    }
    s += 2;
  }
  const Eigen::Index max_s = s;
  if (rho_even > 0.0 && max_s + 1 < N) rho_hat[static_cast<std::size_t>(max_s + 1)] = rho_even;
  for (Eigen::Index t = 1; t <= max_s - 3; t += 2) {
    const auto u = static_cast<std::size_t>(t);
    if (rho_hat[u + 1] + rho_hat[u + 2] > rho_hat[u - 1] + rho_hat[u]) {
      rho_hat[u + 1] = 0.5 * (rho_hat[u - 1] + rho_hat[u]);
      rho_hat[u + 2] = rho_hat[u + 1];
    }
  }
  double tau = -1.0;
  for (Eigen::Index t = 0; t < max_s; ++t) tau += 2.0 * rho_hat[static_cast<std::size_t>(t)];
  if (max_s + 1 < N) tau += rho_hat[static_cast<std::size_t>(max_s + 1)];
  return std::min(total / tau, total * std::log10(total));
}

void require_chains(const std::vector<Vector>& chains) {
  if (chains.empty()) throw ValidationError("diagnostics need at least one chain");
  for (const auto& c : chains) {
    if (c.size() != chains.front().size()) throw ValidationError("chains must have equal length");
  }
}

}  // namespace

double split_rhat(const std::vector<Vector>& chains) {
  require_chains(chains);
  const auto halves = split_chains(chains);
  const Eigen::Index n = halves.front().size();
  if (n < 2) return 1.0;
  Vector means(static_cast<Eigen::Index>(halves.size()));
  double W = 0.0;
  for (std::size_t m = 0; m < halves.size(); ++m) {
    means[static_cast<Eigen::Index>(m)] = halves[m].mean();
    W += sample_variance(halves[m]);
  }
  W /= static_cast<double>(halves.size());
  const double B = static_cast<double>(n) * sample_variance(means);
  if (!(W > 0.0)) return B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double nd = static_cast<double>(n);
  return std::sqrt(((nd - 1.0) / nd * W + B / nd) / W);
}

double ess_bulk(const std::vector<Vector>& chains) {
  require_chains(chains);
  double within = 0.0;
  for (const auto& c : chains) within += sample_variance(c);
  if (!(within > 0.0)) return static_cast<double>(chains.size());
  return geyer_ess(split_chains(rank_normalize(chains)));
}

double ess_mean(const std::vector<Vector>& chains) {
  require_chains(chains);
  double within = 0.0;
  for (const auto& c : chains) within += sample_variance(c);
  if (!(within > 0.0)) return static_cast<double>(chains.size());
  return geyer_ess(split_chains(chains));
}

double mcse_mean(const std::vector<Vector>& chains) {
  Eigen::Index total = 0;
  double sum = 0.0;
  for (const auto& c : chains) {
    total += c.size();
    sum += c.sum();
  }
  const double mean = sum / static_cast<double>(total);
  double ss = 0.0;
  for (const auto& c : chains) ss += (c.array() - mean).square().sum();
  const double sd = std::sqrt(ss / static_cast<double>(total - 1));
  return sd / std::sqrt(ess_mean(chains));
}

std::vector<Vector> chain_columns(const std::vector<ChainDraws>& draws, const std::string& name) {
  std::vector<Vector> out;
  for (const auto& d : draws) out.push_back(d.column(name));
  return out;
}

std::pair<double, double> credible_interval(std::vector<double> values, double level) {
  std::sort(values.begin(), values.end());
  const double alpha = 0.5 * (1.0 - level);
  return {sorted_quantile(values, alpha), sorted_quantile(values, 1.0 - alpha)};
}

std::vector<ParameterSummary> summarize(const std::vector<ChainDraws>& draws, double level) {
  std::vector<ParameterSummary> out;
  if (draws.empty()) return out;
  for (const auto& name : draws.front().parameter_names) {
    const auto chains = chain_columns(draws, name);
    std::vector<double> pooled;
    for (const auto& c : chains) pooled.insert(pooled.end(), c.data(), c.data() + c.size());
    ParameterSummary s;
    s.name = name;
    const double n = static_cast<double>(pooled.size());
    s.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : pooled) ss += (v - s.mean) * (v - s.mean);
    s.sd = pooled.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    std::sort(pooled.begin(), pooled.end());
    s.median = sorted_quantile(pooled, 0.5);
    const double alpha = 0.5 * (1.0 - level);
    s.lower = sorted_quantile(pooled, alpha);
    s.upper = sorted_quantile(pooled, 1.0 - alpha);
    s.rhat = split_rhat(chains);
    s.ess_bulk = ess_bulk(chains);
    out.push_back(s);
  }
  return out;
}

Matrix predict_linear_predictor(const std::vector<ChainDraws>& draws, const ModelSpec& spec, int predictor,
                                const CovariateFrame& frame, std::vector<std::string>* warnings) {
  Eigen::Index n_points = frame.empty() ? 1 : frame.begin()->second.size();
  const auto& blocks = spec.predictor(predictor).blocks;
  std::vector<Matrix> bases;
  for (const auto& block : blocks) {
    bases.push_back(block.basis_at(frame, warnings));
    n_points = bases.back().rows();
  }
  Eigen::Index total = 0;
  for (const auto& d : draws) total += d.n_draws();

  Matrix eta(total, n_points);
  Eigen::Index offset = 0;
  for (const auto& d : draws) {
    const Eigen::Index rows = d.n_draws();
    const Vector intercept = d.column(intercept_name(predictor));
    auto out = eta.middleRows(offset, rows);
    out = intercept.replicate(1, n_points);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const Eigen::Index first = d.index_of(coefficient_name(predictor, blocks[k].label, 0));
      if (first < 0) throw ValidationError("draws lack coefficients for block '" + blocks[k].label + "'");
      out.noalias() += d.values.middleCols(first, blocks[k].n_coef()) * bases[k].transpose();
    }
    offset += rows;
  }
  return eta;
}

Matrix predict_block_effect(const std::vector<ChainDraws>& draws, const ModelSpec& spec, int predictor,
                            std::size_t block, const CovariateFrame& frame, std::vector<std::string>* warnings) {
  const auto& b = spec.predictor(predictor).blocks.at(block);
  const Matrix basis = b.basis_at(frame, warnings);
  Eigen::Index total = 0;
  for (const auto& d : draws) total += d.n_draws();
  Matrix out(total, basis.rows());
  Eigen::Index offset = 0;
  for (const auto& d : draws) {
    const Eigen::Index first = d.index_of(coefficient_name(predictor, b.label, 0));
    if (first < 0) throw ValidationError("draws lack coefficients for block '" + b.label + "'");
    out.middleRows(offset, d.n_draws()).noalias() = d.values.middleCols(first, b.n_coef()) * basis.transpose();
    offset += d.n_draws();
  }
  return out;
}

Matrix predict_quantile(const std::vector<ChainDraws>& draws, const ModelSpec& spec, const CovariateFrame& frame,
                        std::vector<std::string>* warnings) {
  const Matrix eta = predict_linear_predictor(draws, spec, kContinuousPredictor, frame, warnings);
  return eta.unaryExpr([](double e) { return e >= 0.0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e)); });
}

PredictedProbs predict_probs(const std::vector<ChainDraws>& draws, const ModelSpec& spec, const CovariateFrame& frame,
                             std::vector<std::string>* warnings) {
  Matrix eta0;
  Matrix eta1;
  if (spec.has_predictor(kZeroPredictor)) eta0 = predict_linear_predictor(draws, spec, kZeroPredictor, frame, warnings);
  if (spec.has_predictor(kOnePredictor)) eta1 = predict_linear_predictor(draws, spec, kOnePredictor, frame, warnings);
  const Matrix& shape = eta0.size() ? eta0 : eta1;
  PredictedProbs out;
  out.p0 = Matrix::Zero(shape.rows(), shape.cols());
  out.p1 = Matrix::Zero(shape.rows(), shape.cols());
  out.p2 = Matrix::Zero(shape.rows(), shape.cols());
  for (Eigen::Index r = 0; r < shape.rows(); ++r) {
    const Vector e0 = eta0.size() ? Vector(eta0.row(r).transpose()) : Vector();
    const Vector e1 = eta1.size() ? Vector(eta1.row(r).transpose()) : Vector();
    const CategoryProbs p = link_probs(spec.inflation, e0, e1);
    out.p0.row(r) = p.p0.transpose();
    out.p1.row(r) = p.p1.transpose();
    out.p2.row(r) = p.p2.transpose();
  }
  return out;
}

Vector rmse_curve(const Vector& truth, const Matrix& predicted) {
  if (predicted.cols() != truth.size()) throw InvalidDimensionError("prediction grid does not match truth");
  const Eigen::RowVectorXd t = truth.transpose();
  return ((predicted.rowwise() - t).array().square().rowwise().sum() / static_cast<double>(truth.size())).sqrt();
}

Vector interval_covers(const Matrix& predicted, const Vector& truth, double level) {
  if (predicted.cols() != truth.size()) throw InvalidDimensionError("prediction grid does not match truth");
  Vector covers(truth.size());
  for (Eigen::Index p = 0; p < truth.size(); ++p) {
    std::vector<double> column(predicted.col(p).data(), predicted.col(p).data() + predicted.rows());
    const auto [lo, hi] = credible_interval(std::move(column), level);
    covers[p] = (truth[p] >= lo && truth[p] <= hi) ? 1.0 : 0.0;
  }
  return covers;
}

double coverage_rate(const std::vector<Matrix>& per_replicate, const Vector& truth, double level) {
  if (per_replicate.empty()) throw ValidationError("coverage needs at least one replicate");
  Vector per_point = Vector::Zero(truth.size());
  for (const auto& m : per_replicate) per_point += interval_covers(m, truth, level);
  per_point /= static_cast<double>(per_replicate.size());
  return per_point.mean();
}

}  // namespace inflaquant
