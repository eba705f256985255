#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace inflaquant {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Named covariate columns used to evaluate bases at new points. Factor
// covariates (regions, groups) are stored as integer codes.
using CovariateFrame = std::map<std::string, Vector>;

enum class TermKind { Linear, PSpline, Mrf, RandomIntercept, Varying };

std::string to_string(TermKind kind);
TermKind term_kind_from_string(const std::string& name);

// Equidistant B-spline knot set. The basis is a partition of unity on
// [lower, upper].
struct KnotSet {
  Vector knots;
  int degree = 3;
  double lower = 0.0;
  double upper = 1.0;
  int n_basis() const { return static_cast<int>(knots.size()) - degree - 1; }
};

// Everything needed to rebuild a block's basis at new covariate values.
struct BasisRecipe {
  TermKind kind = TermKind::Linear;
  // Linear: one name per column. PSpline: {x}. Varying: {effect_modifier, by}.
  // Mrf / RandomIntercept: {index column}.
  std::vector<std::string> columns;
  KnotSet knots;
  int n_levels = 0;
};

// Orthonormal null-space basis Z of the constraint rows C (C Z = 0).
struct ConstraintTransform {
  Matrix transform;
};

struct AdjacencyGraph {
  int n_regions = 0;
  std::vector<std::pair<int, int>> edges;

  // Validates indices, rejects self-loops, orders each pair and deduplicates.
  static AdjacencyGraph from_edges(int n_regions, std::vector<std::pair<int, int>> edges);
  Matrix laplacian() const;
  // Component id for each region.
  std::vector<int> components(int* n_components = nullptr) const;
};

struct DesignBlock {
  std::string label;
  Matrix basis;    // n x L, after any constraint
  Matrix penalty;  // L x L
  int penalty_rank = 0;
  double hyper_a = 0.01;
  double hyper_b = 0.01;
  std::optional<ConstraintTransform> constraint;
  // Sparse pre-constraint basis, when the term has one; basis == raw_basis * Z.
  SparseRowMatrix raw_basis;
  BasisRecipe recipe;
  std::vector<std::string> warnings;

  Eigen::Index n_rows() const { return basis.rows(); }
  Eigen::Index n_coef() const { return basis.cols(); }
  bool penalized() const { return penalty_rank > 0; }

  // B beta
  Vector times(const Vector& beta) const;
  // B^T v
  Vector transpose_times(const Vector& v) const;
  // B^T diag(weights) B
  Matrix weighted_gram(const Vector& weights) const;

  // Basis evaluated at new covariates, mapped through the stored constraint.
  // Out-of-range continuous covariates are clamped to the knot range.
  Matrix basis_at(const CovariateFrame& frame, std::vector<std::string>* warnings = nullptr) const;
};

struct PSplineOptions {
  int n_basis = 20;
  int degree = 3;
  int diff_order = 2;
  double hyper_a = 0.01;
  double hyper_b = 0.01;
};

KnotSet equidistant_knots(const Vector& x, int n_basis, int degree);
SparseRowMatrix bspline_basis_sparse(const Vector& x, const KnotSet& knots,
                                     std::vector<std::string>* warnings = nullptr);
Matrix bspline_basis(const Vector& x, int n_basis, int degree);

Matrix difference_penalty(int n_coef, int order);

// Number of eigenvalues above 1e-8 times the largest one.
int numerical_rank(const Matrix& symmetric);

DesignBlock build_pspline_term(const std::string& column, const Vector& x,
                               const PSplineOptions& options = {});
DesignBlock build_gmrf_term(const std::string& column, const std::vector<int>& region_index,
                            const AdjacencyGraph& graph, double hyper_a = 0.01,
                            double hyper_b = 0.01);
DesignBlock build_random_intercept(const std::string& column, const std::vector<int>& group_index,
                                   int n_groups, double hyper_a = 0.01, double hyper_b = 0.01);
DesignBlock build_linear_term(const std::vector<std::string>& columns, const Matrix& values);
// x_by * f(x_effect) with f a P-spline; left unconstrained.
DesignBlock build_varying_term(const std::string& by_column, const Vector& by,
                               const std::string& effect_column, const Vector& x_effect,
                               const PSplineOptions& options = {});

DesignBlock apply_sum_to_zero_constraint(DesignBlock block);
// General form: reparameterise so that constraint_rows * beta_raw = 0.
DesignBlock apply_linear_constraints(DesignBlock block, const Matrix& constraint_rows);

}  // namespace inflaquant
