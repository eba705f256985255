#pragma once

#include <string>
#include <utility>
#include <vector>

#include "inflaquant/engine.hpp"

namespace inflaquant {

// Split-chain potential scale reduction. Returns 1 when every draw is equal.
double split_rhat(const std::vector<Vector>& chains);
// Rank-normalised split-chain ESS with Geyer's initial monotone sequence.
double ess_bulk(const std::vector<Vector>& chains);
// Same estimator on the raw values; the right ESS for Monte Carlo errors of means.
double ess_mean(const std::vector<Vector>& chains);
double mcse_mean(const std::vector<Vector>& chains);

std::vector<Vector> chain_columns(const std::vector<ChainDraws>& draws, const std::string& name);

// Equal-tailed interval from type-7 quantiles.
std::pair<double, double> credible_interval(std::vector<double> values, double level);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double rhat = 1.0;
  double ess_bulk = 0.0;
};

std::vector<ParameterSummary> summarize(const std::vector<ChainDraws>& draws, double level = 0.9);

// Linear predictor of one predictor at new covariates, one row per pooled draw.
Matrix predict_linear_predictor(const std::vector<ChainDraws>& draws, const ModelSpec& spec, int predictor,
                                const CovariateFrame& frame, std::vector<std::string>* warnings = nullptr);

// Contribution B_k beta_k of one block, one row per pooled draw.
Matrix predict_block_effect(const std::vector<ChainDraws>& draws, const ModelSpec& spec, int predictor,
                            std::size_t block, const CovariateFrame& frame,
                            std::vector<std::string>* warnings = nullptr);

// logit^{-1}(eta_2) per draw (rows) and point (columns).
Matrix predict_quantile(const std::vector<ChainDraws>& draws, const ModelSpec& spec, const CovariateFrame& frame,
                        std::vector<std::string>* warnings = nullptr);

struct PredictedProbs {
  Matrix p0;
  Matrix p1;
  Matrix p2;
};

PredictedProbs predict_probs(const std::vector<ChainDraws>& draws, const ModelSpec& spec, const CovariateFrame& frame,
                             std::vector<std::string>* warnings = nullptr);

// Per-draw root mean squared error over the grid.
Vector rmse_curve(const Vector& truth, const Matrix& predicted);

// 1 where the central interval of the draws (column) covers the truth.
Vector interval_covers(const Matrix& predicted, const Vector& truth, double level = 0.95);
// Averages coverage indicators over replicates, then over points.
double coverage_rate(const std::vector<Matrix>& per_replicate, const Vector& truth, double level = 0.95);

}  // namespace inflaquant
