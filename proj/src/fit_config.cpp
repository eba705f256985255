#include "inflaquant/fit_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "inflaquant/errors.hpp"

namespace inflaquant {
namespace {

using nlohmann::json;

constexpr std::array<const char*, 3> kPredictorKeys{"zero", "one", "continuous"};

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("key '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

TermConfig parse_term(const json& j, const std::filesystem::path& base_dir, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  reject_unknown_keys(j, {"type", "column", "columns", "by", "n_basis", "degree", "diff_order", "a", "b", "adjacency",
                          "levels"},
                      where);
  TermConfig t;
  if (!j.contains("type")) throw ValidationError(where + " lacks 'type'");
  const auto type = get_or<std::string>(j, "type", "", where);
  t.kind = term_kind_from_string(type);
  if (j.contains("columns")) t.columns = get_or<std::vector<std::string>>(j, "columns", {}, where);
  if (j.contains("column")) t.columns.push_back(get_or<std::string>(j, "column", "", where));
  if (t.columns.empty()) throw ValidationError(where + " names no covariate column");
  if (t.kind != TermKind::Linear && t.columns.size() != 1) {
    throw ValidationError(where + ": a " + type + " term takes exactly one column");
  }
  t.by = get_or<std::string>(j, "by", "", where);
  if ((t.kind == TermKind::Varying) != !t.by.empty()) {
    throw ValidationError(where + ": 'by' is required for varying terms and only allowed there");
  }
  t.spline.n_basis = get_or<int>(j, "n_basis", t.spline.n_basis, where);
  t.spline.degree = get_or<int>(j, "degree", t.spline.degree, where);
  t.spline.diff_order = get_or<int>(j, "diff_order", t.spline.diff_order, where);
  t.hyper_a = get_or<double>(j, "a", t.hyper_a, where);
  t.hyper_b = get_or<double>(j, "b", t.hyper_b, where);
  if (!(t.hyper_a > 0.0 && t.hyper_b > 0.0)) throw ValidationError(where + ": hyperparameters a and b must be positive");
  t.spline.hyper_a = t.hyper_a;
  t.spline.hyper_b = t.hyper_b;
  const auto adjacency = get_or<std::string>(j, "adjacency", "", where);
  if ((t.kind == TermKind::Mrf) != !adjacency.empty()) {
    throw ValidationError(where + ": an adjacency file is required for mrf terms and only allowed there");
  }
  if (!adjacency.empty()) {
    const std::filesystem::path a = adjacency;
    t.adjacency = a.is_absolute() ? a : base_dir / a;
  }
  t.levels = get_or<std::vector<std::string>>(j, "levels", {}, where);
  return t;
}

FactorCoding coding_from_levels(std::vector<std::string> levels, const std::string& column) {
  FactorCoding f;
  for (const auto& l : levels) {
    if (!f.code.emplace(l, static_cast<int>(f.levels.size())).second) {
      throw ValidationError("factor '" + column + "' declares level '" + l + "' twice");
    }
    f.levels.push_back(l);
  }
  return f;
}

const std::string& field(const CsvTable& table, std::size_t row, long column) {
  return table.rows[row][static_cast<std::size_t>(column)];
}

long require_column(const CsvTable& table, const std::string& name) {
  const long c = table.column_index(name);
  if (c < 0) throw ValidationError("data has no column '" + name + "'");
  return c;
}

Vector code_factor(const CsvTable& table, const std::string& column, const FactorCoding& coding) {
  const long c = require_column(table, column);
  Vector out(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto it = coding.code.find(field(table, r, c));
    if (it == coding.code.end()) {
      throw DataValidationError("column '" + column + "': unknown level '" + field(table, r, c) + "'",
                                static_cast<long>(r));
    }
    out[static_cast<Eigen::Index>(r)] = it->second;
  }
  return out;
}

std::vector<int> to_int(const Vector& codes) {
  std::vector<int> out(static_cast<std::size_t>(codes.size()));
  for (Eigen::Index i = 0; i < codes.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(codes[i]);
  return out;
}

std::vector<std::string> numeric_columns(const TermConfig& t) {
  switch (t.kind) {
    case TermKind::Linear:
    case TermKind::PSpline: return t.columns;
    case TermKind::Varying: return {t.columns.front(), t.by};
    default: return {};
  }
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void FitConfig::validate() const {
  if (taus.empty()) throw ValidationError("at least one tau is required");
  for (double t : taus) {
    if (!(t > 0.0 && t < 1.0)) throw ValidationError("tau values must lie in (0, 1)");
  }
  for (int j = 0; j < 2; ++j) {
    const bool modelled = j == kZeroPredictor ? has_zero(inflation) : has_one(inflation);
    if (!modelled && !terms[static_cast<std::size_t>(j)].empty()) {
      throw ValidationError(std::string("terms declared for predictor '") + kPredictorKeys[static_cast<std::size_t>(j)] +
                            "' but inflation is '" + to_string(inflation) + "'");
    }
  }
  run.validate();
}

FitConfig parse_fit_config(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  reject_unknown_keys(j, {"data", "response", "inflation", "tau", "predictors", "run", "output"}, "config");
  FitConfig c;
  c.source = j;
  if (!j.contains("data")) throw ValidationError("config lacks 'data'");
  const std::filesystem::path data = get_or<std::string>(j, "data", "", "config");
  c.data_path = data.is_absolute() ? data : base_dir / data;
  c.response = get_or<std::string>(j, "response", c.response, "config");
  c.inflation = inflation_kind_from_string(get_or<std::string>(j, "inflation", "zero_and_one", "config"));
  if (j.contains("tau")) {
    c.taus = j.at("tau").is_array() ? get_or<std::vector<double>>(j, "tau", {}, "config")
                                    : std::vector<double>{get_or<double>(j, "tau", 0.5, "config")};
  }
  if (j.contains("predictors")) {
    const json& p = j.at("predictors");
    if (!p.is_object()) throw ValidationError("'predictors' must be an object");
    reject_unknown_keys(p, {"zero", "one", "continuous"}, "predictors");
    for (std::size_t k = 0; k < 3; ++k) {
      if (!p.contains(kPredictorKeys[k])) continue;
      const json& list = p.at(kPredictorKeys[k]);
      if (!list.is_array()) throw ValidationError(std::string("predictors.") + kPredictorKeys[k] + " must be a list");
      for (std::size_t t = 0; t < list.size(); ++t) {
        c.terms[k].push_back(
            parse_term(list[t], base_dir, std::string("predictors.") + kPredictorKeys[k] + "[" + std::to_string(t) + "]"));
      }
    }
  }
  if (j.contains("run")) {
    const json& r = j.at("run");
    reject_unknown_keys(r, {"chains", "warmup", "draws", "seed", "thin", "store_latent"}, "run");
    c.run.n_chains = get_or<int>(r, "chains", c.run.n_chains, "run");
    c.run.warmup = get_or<int>(r, "warmup", c.run.warmup, "run");
    c.run.draws = get_or<int>(r, "draws", c.run.draws, "run");
    c.run.base_seed = get_or<std::uint64_t>(r, "seed", c.run.base_seed, "run");
    c.run.thin = get_or<int>(r, "thin", c.run.thin, "run");
    c.run.store_latent = get_or<bool>(r, "store_latent", c.run.store_latent, "run");
  }
  if (j.contains("output")) {
    const std::filesystem::path out = get_or<std::string>(j, "output", "", "config");
    c.output_dir = out.is_absolute() ? out : base_dir / out;
  }
  c.validate();
  return c;
}

FitConfig load_fit_config(const std::filesystem::path& path) {
  return parse_fit_config(read_json(path), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

std::vector<std::pair<std::string, std::string>> read_adjacency_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open adjacency file '" + path.string() + "'");
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  long number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream tokens(line);
    std::string a, b, extra;
    if (!(tokens >> a >> b) || (tokens >> extra)) {
      throw ValidationError("adjacency file '" + path.string() + "' line " + std::to_string(number) +
                            ": expected 'regionA regionB'");
    }
    edges.emplace_back(a, b);
  }
  return edges;
}

PreparedData prepare_training_data(const FitConfig& config, const CsvTable& table) {
  PreparedData d;
  d.y = numeric_column(table, config.response);
  for (const auto& terms : config.terms) {
    for (const auto& t : terms) {
      for (const auto& name : numeric_columns(t)) {
        if (!d.frame.count(name)) d.frame[name] = numeric_column(table, name);
      }
      if (t.kind != TermKind::Mrf && t.kind != TermKind::RandomIntercept) continue;
      const std::string& column = t.columns.front();
      const long c = require_column(table, column);
      std::vector<std::pair<std::string, std::string>> edges;
      if (t.kind == TermKind::Mrf) edges = read_adjacency_file(t.adjacency);
      if (!d.factors.count(column)) {
        std::vector<std::string> levels = t.levels;
        if (levels.empty()) {
          std::set<std::string> seen;
          for (std::size_t r = 0; r < table.rows.size(); ++r) seen.insert(field(table, r, c));
          for (const auto& [a, b] : edges) {
            seen.insert(a);
            seen.insert(b);
          }
          levels.assign(seen.begin(), seen.end());
        }
        d.factors[column] = coding_from_levels(levels, column);
        d.frame[column] = code_factor(table, column, d.factors[column]);
      }
      if (t.kind == TermKind::Mrf && !d.graphs.count(column)) {
        const FactorCoding& f = d.factors[column];
        std::vector<std::pair<int, int>> coded;
        for (const auto& [a, b] : edges) {
          const auto ia = f.code.find(a);
          const auto ib = f.code.find(b);
          if (ia == f.code.end() || ib == f.code.end()) {
            throw ValidationError("adjacency file '" + t.adjacency.string() + "' names a region outside the levels of '" +
                                  column + "'");
          }
          coded.emplace_back(ia->second, ib->second);
        }
        d.graphs[column] = AdjacencyGraph::from_edges(static_cast<int>(f.levels.size()), std::move(coded));
      }
    }
  }
  return d;
}

CovariateFrame prepare_new_data(const FitConfig& config, const PreparedData& training, const CsvTable& table) {
  CovariateFrame frame;
  for (const auto& terms : config.terms) {
    for (const auto& t : terms) {
      for (const auto& name : numeric_columns(t)) {
        if (!frame.count(name)) frame[name] = numeric_column(table, name);
      }
      if (t.kind == TermKind::Mrf || t.kind == TermKind::RandomIntercept) {
        const std::string& column = t.columns.front();
        if (!frame.count(column)) frame[column] = code_factor(table, column, training.factors.at(column));
      }
    }
  }
  return frame;
}

ModelSpec build_model_spec(const FitConfig& config, const PreparedData& data, double tau) {
  ModelSpec spec;
  spec.inflation = config.inflation;
  spec.tau = tau;
  std::array<PredictorSpec*, 3> predictors{&spec.discrete0, &spec.discrete1, &spec.continuous};
  for (std::size_t j = 0; j < 3; ++j) {
    for (const auto& t : config.terms[j]) {
      DesignBlock block;
      switch (t.kind) {
        case TermKind::Linear: {
          Matrix values(data.y.size(), static_cast<Eigen::Index>(t.columns.size()));
          for (std::size_t c = 0; c < t.columns.size(); ++c) {
            values.col(static_cast<Eigen::Index>(c)) = data.frame.at(t.columns[c]);
          }
          block = build_linear_term(t.columns, values);
          break;
        }
        case TermKind::PSpline:
          block = build_pspline_term(t.columns.front(), data.frame.at(t.columns.front()), t.spline);
          break;
        case TermKind::Mrf:
          block = build_gmrf_term(t.columns.front(), to_int(data.frame.at(t.columns.front())),
                                  data.graphs.at(t.columns.front()), t.hyper_a, t.hyper_b);
          break;
        case TermKind::RandomIntercept:
          block = build_random_intercept(t.columns.front(), to_int(data.frame.at(t.columns.front())),
                                         static_cast<int>(data.factors.at(t.columns.front()).levels.size()), t.hyper_a,
                                         t.hyper_b);
          break;
        case TermKind::Varying:
          block = build_varying_term(t.by, data.frame.at(t.by), t.columns.front(), data.frame.at(t.columns.front()),
                                     t.spline);
          break;
      }
      for (const auto& other : predictors[j]->blocks) {
        if (other.label == block.label) throw ValidationError("duplicate term '" + block.label + "' in one predictor");
      }
      predictors[j]->blocks.push_back(std::move(block));
    }
  }
  spec.validate(data.y.size());
  return spec;
}

json describe_model(const ModelSpec& spec) {
  json out;
  out["inflation"] = to_string(spec.inflation);
  out["tau"] = spec.tau;
  out["delta_prior"] = {{"a", spec.delta_prior_a}, {"b", spec.delta_prior_b}};
  json predictors = json::array();
  for (int j = 0; j < 3; ++j) {
    json p;
    p["index"] = j;
    p["modelled"] = spec.has_predictor(j);
    json blocks = json::array();
    for (const auto& b : spec.predictor(j).blocks) {
      json block;
      block["label"] = b.label;
      block["kind"] = to_string(b.recipe.kind);
      block["columns"] = b.recipe.columns;
      block["n_coef"] = b.n_coef();
      block["penalty_rank"] = b.penalty_rank;
      block["hyper"] = {{"a", b.hyper_a}, {"b", b.hyper_b}};
      if (b.recipe.kind == TermKind::PSpline || b.recipe.kind == TermKind::Varying) {
        const auto& k = b.recipe.knots;
        block["knots"] = std::vector<double>(k.knots.data(), k.knots.data() + k.knots.size());
        block["degree"] = k.degree;
        block["range"] = {k.lower, k.upper};
      }
      if (b.recipe.n_levels > 0) block["n_levels"] = b.recipe.n_levels;
      if (b.constraint) block["constraint_transform"] = matrix_json(b.constraint->transform);
      if (!b.warnings.empty()) block["warnings"] = b.warnings;
      blocks.push_back(std::move(block));
    }
    p["blocks"] = std::move(blocks);
    predictors.push_back(std::move(p));
  }
  out["predictors"] = std::move(predictors);
  return out;
}

std::string tau_directory_name(double tau) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "tau_%g", tau);
  return buffer;
}

}  // namespace inflaquant
