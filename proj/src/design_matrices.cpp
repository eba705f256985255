#include "inflaquant/design_matrices.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "inflaquant/errors.hpp"

namespace inflaquant {

std::string to_string(TermKind kind) {
  switch (kind) {
    case TermKind::Linear: return "linear";
    case TermKind::PSpline: return "pspline";
    case TermKind::Mrf: return "mrf";
    case TermKind::RandomIntercept: return "random_intercept";
    case TermKind::Varying: return "varying";
  }
  return "unknown";
}

TermKind term_kind_from_string(const std::string& name) {
  if (name == "linear") return TermKind::Linear;
  if (name == "pspline") return TermKind::PSpline;
  if (name == "mrf") return TermKind::Mrf;
  if (name == "random_intercept") return TermKind::RandomIntercept;
  if (name == "varying") return TermKind::Varying;
  throw ValidationError("unknown term type '" + name + "'");
}

// ---------------------------------------------------------------------------
// Adjacency graphs

AdjacencyGraph AdjacencyGraph::from_edges(int n_regions, std::vector<std::pair<int, int>> edges) {
  if (n_regions <= 0) throw InvalidDimensionError("adjacency graph needs at least one region");
  std::set<std::pair<int, int>> unique;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_regions || b >= n_regions) {
      throw ValidationError("adjacency edge (" + std::to_string(a) + ", " + std::to_string(b) +
                            ") references a region outside [0, " + std::to_string(n_regions) + ")");
    }
    if (a == b) throw ValidationError("adjacency self-loop at region " + std::to_string(a));
    unique.emplace(std::min(a, b), std::max(a, b));
  }
  AdjacencyGraph graph;
  graph.n_regions = n_regions;
  graph.edges.assign(unique.begin(), unique.end());
  return graph;
}

Matrix AdjacencyGraph::laplacian() const {
  Matrix K = Matrix::Zero(n_regions, n_regions);
  for (auto [a, b] : edges) {
    K(a, a) += 1.0;
    K(b, b) += 1.0;
    K(a, b) -= 1.0;
    K(b, a) -= 1.0;
  }
  return K;
}

std::vector<int> AdjacencyGraph::components(int* n_components) const {
  std::vector<int> parent(n_regions);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (auto [a, b] : edges) parent[find(a)] = find(b);

  std::vector<int> id(n_regions, -1);
  std::map<int, int> root_to_id;
  for (int r = 0; r < n_regions; ++r) {
    const int root = find(r);
    auto [it, inserted] = root_to_id.emplace(root, static_cast<int>(root_to_id.size()));
    id[r] = it->second;
  }
  if (n_components) *n_components = static_cast<int>(root_to_id.size());
  return id;
}

// ---------------------------------------------------------------------------
// Block products

Vector DesignBlock::times(const Vector& beta) const {
  if (raw_basis.rows() == 0) return basis * beta;
  if (constraint) return raw_basis * (constraint->transform * beta);
  return raw_basis * beta;
}

Vector DesignBlock::transpose_times(const Vector& v) const {
  if (raw_basis.rows() == 0) return basis.transpose() * v;
  Vector raw = raw_basis.transpose() * v;
  if (constraint) return constraint->transform.transpose() * raw;
  return raw;
}

Matrix DesignBlock::weighted_gram(const Vector& weights) const {
  if (raw_basis.rows() == 0) {
    Matrix gram = basis.transpose() * weights.asDiagonal() * basis;
    return 0.5 * (gram + gram.transpose());
  }
  const Eigen::Index L = raw_basis.cols();
  Matrix gram = Matrix::Zero(L, L);
  for (Eigen::Index i = 0; i < raw_basis.outerSize(); ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    for (SparseRowMatrix::InnerIterator a(raw_basis, i); a; ++a) {
      const double wa = w * a.value();
      for (SparseRowMatrix::InnerIterator b(raw_basis, i); b; ++b) {
        gram(a.col(), b.col()) += wa * b.value();
      }
    }
  }
  if (!constraint) return gram;
  const Matrix& Z = constraint->transform;
  Matrix reduced = Z.transpose() * gram * Z;
  return 0.5 * (reduced + reduced.transpose());
}

namespace {

Vector column_or_throw(const CovariateFrame& frame, const std::string& name) {
  auto it = frame.find(name);
  if (it == frame.end()) throw ValidationError("covariate column '" + name + "' is missing");
  return it->second;
}

SparseRowMatrix one_hot(const std::vector<int>& index, int n_levels) {
  SparseRowMatrix m(static_cast<Eigen::Index>(index.size()), n_levels);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= n_levels) {
      throw DataValidationError("level index " + std::to_string(index[i]) +
                                    " outside [0, " + std::to_string(n_levels) + ")",
                                static_cast<long>(i));
    }
    triplets.emplace_back(static_cast<Eigen::Index>(i), index[i], 1.0);
  }
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

std::vector<int> to_codes(const Vector& values) {
  std::vector<int> codes(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!std::isfinite(v) || v != std::round(v)) {
      throw DataValidationError("factor code is not an integer", static_cast<long>(i));
    }
    codes[i] = static_cast<int>(v);
  }
  return codes;
}

SparseRowMatrix scale_rows(SparseRowMatrix m, const Vector& scale) {
  for (Eigen::Index i = 0; i < m.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) it.valueRef() *= scale[i];
  }
  return m;
}

void check_finite(const Vector& x, const std::string& what) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw DataValidationError(what + " is not finite", static_cast<long>(i));
  }
}

}  // namespace

Matrix DesignBlock::basis_at(const CovariateFrame& frame, std::vector<std::string>* warn) const {
  Matrix raw;
  switch (recipe.kind) {
    case TermKind::Linear: {
      const Eigen::Index n = column_or_throw(frame, recipe.columns.front()).size();
      raw.resize(n, static_cast<Eigen::Index>(recipe.columns.size()));
      for (std::size_t c = 0; c < recipe.columns.size(); ++c) {
        raw.col(static_cast<Eigen::Index>(c)) = column_or_throw(frame, recipe.columns[c]);
      }
      break;
    }
    case TermKind::PSpline:
      raw = Matrix(bspline_basis_sparse(column_or_throw(frame, recipe.columns[0]), recipe.knots, warn));
      break;
    case TermKind::Varying: {
      const Vector x = column_or_throw(frame, recipe.columns[0]);
      const Vector by = column_or_throw(frame, recipe.columns[1]);
      raw = Matrix(scale_rows(bspline_basis_sparse(x, recipe.knots, warn), by));
      break;
    }
    case TermKind::Mrf:
    case TermKind::RandomIntercept:
      raw = Matrix(one_hot(to_codes(column_or_throw(frame, recipe.columns[0])), recipe.n_levels));
      break;
  }
  if (constraint) return raw * constraint->transform;
  return raw;
}

// ---------------------------------------------------------------------------
// B-splines

KnotSet equidistant_knots(const Vector& x, int n_basis, int degree) {
  if (degree < 0) throw InvalidDimensionError("spline degree must be non-negative");
  if (n_basis < degree + 1 || n_basis < 4) {
    throw InvalidDimensionError("need n_basis >= max(4, degree + 1); got n_basis=" +
                                std::to_string(n_basis) + ", degree=" + std::to_string(degree));
  }
  check_finite(x, "spline covariate");
  if (x.size() == 0) throw DegenerateCovariateError("spline covariate is empty");
  const double lo = x.minCoeff();
  const double hi = x.maxCoeff();
  if (!(hi > lo)) throw DegenerateCovariateError("spline covariate has fewer than 2 distinct values");

  const double pad = 1e-6 * (hi - lo);
  KnotSet set;
  set.degree = degree;
  set.lower = lo - pad;
  set.upper = hi + pad;
  const int n_intervals = n_basis - degree;
  const double h = (set.upper - set.lower) / n_intervals;
  set.knots.resize(n_basis + degree + 1);
  for (int j = 0; j < set.knots.size(); ++j) set.knots[j] = set.lower + (j - degree) * h;
  return set;
}

SparseRowMatrix bspline_basis_sparse(const Vector& x, const KnotSet& set,
                                     std::vector<std::string>* warnings) {
  const int p = set.degree;
  const int n_basis = set.n_basis();
  const Vector& t = set.knots;
  const double h = (set.upper - set.lower) / (n_basis - p);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(x.size()) * (p + 1));
  std::vector<double> N(p + 1), left(p + 1), right(p + 1);
  long n_clamped = 0;

  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double u = x[i];
    if (!std::isfinite(u)) throw DataValidationError("spline covariate is not finite", static_cast<long>(i));
    if (u < set.lower || u > set.upper) {
      u = std::clamp(u, set.lower, set.upper);
      ++n_clamped;
    }
    int span = p + static_cast<int>(std::floor((u - set.lower) / h));
    span = std::clamp(span, p, n_basis - 1);
    // Guard the floor() against rounding at interior knots.
    while (span > p && u < t[span]) --span;
    while (span < n_basis - 1 && u >= t[span + 1]) ++span;

    N[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = u - t[span + 1 - j];
      right[j] = t[span + j] - u;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double temp = N[r] / (right[r + 1] + left[j - r]);
        N[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      N[j] = saved;
    }
    for (int r = 0; r <= p; ++r) {
      if (N[r] != 0.0) triplets.emplace_back(i, span - p + r, N[r]);
    }
  }
  if (n_clamped > 0 && warnings) {
    warnings->push_back(std::to_string(n_clamped) +
                        " covariate value(s) outside the spline range were clamped to the boundary");
  }
  SparseRowMatrix B(x.size(), n_basis);
  B.setFromTriplets(triplets.begin(), triplets.end());
  B.makeCompressed();
  return B;
}

Matrix bspline_basis(const Vector& x, int n_basis, int degree) {
  return Matrix(bspline_basis_sparse(x, equidistant_knots(x, n_basis, degree)));
}

Matrix difference_penalty(int n_coef, int order) {
  if (order < 1 || n_coef <= order) {
    throw InvalidDimensionError("difference penalty needs n_coef > order >= 1; got n_coef=" +
                                std::to_string(n_coef) + ", order=" + std::to_string(order));
  }
  Matrix D = Matrix::Identity(n_coef, n_coef);
  for (int k = 0; k < order; ++k) {
    const Eigen::Index r = D.rows();
    D = (D.bottomRows(r - 1) - D.topRows(r - 1)).eval();
  }
  return D.transpose() * D;
}

int numerical_rank(const Matrix& symmetric) {
  if (symmetric.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric, Eigen::EigenvaluesOnly);
  const Vector& values = eig.eigenvalues();
  const double largest = values.maxCoeff();
  if (!(largest > 0.0)) return 0;
  return static_cast<int>((values.array() > 1e-8 * largest).count());
}

// ---------------------------------------------------------------------------
// Constraints

DesignBlock apply_linear_constraints(DesignBlock block, const Matrix& constraint_rows) {
  const Eigen::Index L = block.n_coef();
  const Eigen::Index c = constraint_rows.rows();
  if (constraint_rows.cols() != L) throw InvalidDimensionError("constraint width does not match block");
  if (c >= L) throw InvalidDimensionError("block '" + block.label + "' has too few columns to constrain");

  Eigen::HouseholderQR<Matrix> qr(constraint_rows.transpose());
  const Matrix Q = qr.householderQ() * Matrix::Identity(L, L);
  const Matrix Z = Q.rightCols(L - c);

  block.basis = block.basis * Z;
  Matrix K = Z.transpose() * block.penalty * Z;
  block.penalty = 0.5 * (K + K.transpose());
  block.penalty_rank = numerical_rank(block.penalty);
  if (block.constraint) {
    block.constraint->transform = block.constraint->transform * Z;
  } else {
    block.constraint = ConstraintTransform{Z};
  }
  return block;
}

DesignBlock apply_sum_to_zero_constraint(DesignBlock block) {
  if (block.n_coef() < 2) {
    throw InvalidDimensionError("sum-to-zero constraint needs at least 2 columns in '" + block.label + "'");
  }
  const Matrix column_sums = Vector::Ones(block.n_rows()).transpose() * block.basis;
  return apply_linear_constraints(std::move(block), column_sums);
}

// ---------------------------------------------------------------------------
// Term builders

DesignBlock build_pspline_term(const std::string& column, const Vector& x, const PSplineOptions& o) {
  const KnotSet knots = equidistant_knots(x, o.n_basis, o.degree);
  DesignBlock block;
  block.label = "s_" + column;
  block.raw_basis = bspline_basis_sparse(x, knots);
  block.basis = Matrix(block.raw_basis);
  block.penalty = difference_penalty(o.n_basis, o.diff_order);
  block.penalty_rank = o.n_basis - o.diff_order;
  block.hyper_a = o.hyper_a;
  block.hyper_b = o.hyper_b;
  block.recipe.kind = TermKind::PSpline;
  block.recipe.columns = {column};
  block.recipe.knots = knots;
  return apply_sum_to_zero_constraint(std::move(block));
}

DesignBlock build_varying_term(const std::string& by_column, const Vector& by,
                               const std::string& effect_column, const Vector& x_effect,
                               const PSplineOptions& o) {
  if (by.size() != x_effect.size()) throw InvalidDimensionError("varying term columns differ in length");
  check_finite(by, "varying-coefficient modifier");
  const KnotSet knots = equidistant_knots(x_effect, o.n_basis, o.degree);
  DesignBlock block;
  block.label = "vc_" + by_column + "_" + effect_column;
  block.raw_basis = scale_rows(bspline_basis_sparse(x_effect, knots), by);
  block.basis = Matrix(block.raw_basis);
  block.penalty = difference_penalty(o.n_basis, o.diff_order);
  block.penalty_rank = o.n_basis - o.diff_order;
  block.hyper_a = o.hyper_a;
  block.hyper_b = o.hyper_b;
  block.recipe.kind = TermKind::Varying;
  block.recipe.columns = {effect_column, by_column};
  block.recipe.knots = knots;
  return block;
}

DesignBlock build_gmrf_term(const std::string& column, const std::vector<int>& region_index,
                            const AdjacencyGraph& graph, double hyper_a, double hyper_b) {
  const int R = graph.n_regions;
  DesignBlock block;
  block.label = "mrf_" + column;
  block.raw_basis = one_hot(region_index, R);
  block.basis = Matrix(block.raw_basis);
  block.penalty = graph.laplacian();
  int n_components = 0;
  const std::vector<int> component = graph.components(&n_components);
  block.penalty_rank = R - n_components;
  block.hyper_a = hyper_a;
  block.hyper_b = hyper_b;
  block.recipe.kind = TermKind::Mrf;
  block.recipe.columns = {column};
  block.recipe.n_levels = R;

  const Vector counts = block.basis.colwise().sum().transpose();
  for (int r = 0; r < R; ++r) {
    if (counts[r] == 0.0) block.warnings.push_back("region " + std::to_string(r) + " has no observations");
  }
  if (R < 2) return block;

  Matrix rows = Matrix::Zero(n_components, R);
  for (int r = 0; r < R; ++r) rows(component[r], r) = counts[r];
  for (int c = 0; c < n_components; ++c) {
    if (rows.row(c).sum() == 0.0) {
      for (int r = 0; r < R; ++r) {
        if (component[r] == c) rows(c, r) = 1.0;
      }
    }
  }
  return apply_linear_constraints(std::move(block), rows);
}

DesignBlock build_random_intercept(const std::string& column, const std::vector<int>& group_index,
                                   int n_groups, double hyper_a, double hyper_b) {
  if (n_groups < 1) throw InvalidDimensionError("random intercept needs at least one group");
  DesignBlock block;
  block.label = "re_" + column;
  block.raw_basis = one_hot(group_index, n_groups);
  block.basis = Matrix(block.raw_basis);
  block.penalty = Matrix::Identity(n_groups, n_groups);
  block.penalty_rank = n_groups;
  block.hyper_a = hyper_a;
  block.hyper_b = hyper_b;
  block.recipe.kind = TermKind::RandomIntercept;
  block.recipe.columns = {column};
  block.recipe.n_levels = n_groups;
  const Vector counts = block.basis.colwise().sum().transpose();
  for (int g = 0; g < n_groups; ++g) {
    if (counts[g] == 0.0) block.warnings.push_back("group " + std::to_string(g) + " has no observations");
  }
  return block;
}

DesignBlock build_linear_term(const std::vector<std::string>& columns, const Matrix& values) {
  if (static_cast<Eigen::Index>(columns.size()) != values.cols() || columns.empty()) {
    throw InvalidDimensionError("linear term needs one name per column");
  }
  for (Eigen::Index c = 0; c < values.cols(); ++c) check_finite(values.col(c), "linear covariate " + columns[c]);
  DesignBlock block;
  block.label = "lin";
  for (const auto& c : columns) block.label += "_" + c;
  block.basis = values;
  block.penalty = Matrix::Zero(values.cols(), values.cols());
  block.penalty_rank = 0;
  block.recipe.kind = TermKind::Linear;
  block.recipe.columns = columns;
  return block;
}

}  // namespace inflaquant
