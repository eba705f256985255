#include "inflaquant/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "inflaquant/errors.hpp"

#ifndef INFLAQUANT_VERSION
#define INFLAQUANT_VERSION "0.0.0"
#endif

namespace inflaquant {
namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void spill(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

long CsvTable::column_index(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return static_cast<long>(c);
  }
  return -1;
}

const std::string& CsvTable::at(std::size_t row, const std::string& column) const {
  const long c = column_index(column);
  if (c < 0) throw ValidationError("column '" + column + "' not found");
  return rows.at(row)[static_cast<std::size_t>(c)];
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A lone empty field is a blank line.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started) throw ValidationError("stray quote in CSV at line " + std::to_string(line));
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
      ++line;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted CSV field");
  if (!field.empty() || !record.empty()) end_record();

  CsvTable table;
  if (records.empty()) throw ValidationError("CSV has no header");
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw DataValidationError("CSV row has " + std::to_string(records[r].size()) + " fields, header has " +
                                    std::to_string(table.header.size()),
                                static_cast<long>(r) - 1);
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(slurp(path)); }

std::string format_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c) out += ',';
      out += quote_if_needed(fields[c]);
    }
    out += "\r\n";
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) { spill(path, format_csv(table)); }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

double parse_double(const std::string& field, std::size_t row, const std::string& column) {
  const char* begin = field.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t')) ++end;
  if (field.empty() || end == begin || *end != '\0' || (errno == ERANGE && std::isinf(v))) {
    throw DataValidationError("column '" + column + "': cannot parse '" + field + "' as a number",
                              static_cast<long>(row));
  }
  return v;
}

Vector numeric_column(const CsvTable& table, const std::string& name) {
  const long c = table.column_index(name);
  if (c < 0) throw ValidationError("column '" + name + "' not found");
  Vector out(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out[static_cast<Eigen::Index>(r)] = parse_double(table.rows[r][static_cast<std::size_t>(c)], r, name);
  }
  return out;
}

void write_chain_csv(const std::filesystem::path& path, const ChainDraws& draws) {
  std::string out;
  for (const auto& name : draws.parameter_names) {
    out += quote_if_needed(name);
    out += ',';
  }
  out += kLogPostColumn;
  out += "\r\n";
  for (Eigen::Index r = 0; r < draws.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < draws.values.cols(); ++c) {
      out += format_double(draws.values(r, c));
      out += ',';
    }
    out += format_double(draws.log_posterior[r]);
    out += "\r\n";
  }
  spill(path, out);
}

ChainDraws read_chain_csv(const std::filesystem::path& path, int chain_id) {
  const CsvTable table = read_csv(path);
  const long lp = table.column_index(kLogPostColumn);
  ChainDraws d;
  d.chain_id = chain_id;
  std::vector<std::size_t> columns;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (static_cast<long>(c) == lp) continue;
    d.parameter_names.push_back(table.header[c]);
    columns.push_back(c);
  }
  const auto rows = static_cast<Eigen::Index>(table.rows.size());
  d.values.resize(rows, static_cast<Eigen::Index>(columns.size()));
  d.log_posterior = Vector::Constant(rows, std::nan(""));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    for (std::size_t k = 0; k < columns.size(); ++k) {
      d.values(r, static_cast<Eigen::Index>(k)) =
          parse_double(row[columns[k]], static_cast<std::size_t>(r), table.header[columns[k]]);
    }
    if (lp >= 0) d.log_posterior[r] = parse_double(row[static_cast<std::size_t>(lp)], static_cast<std::size_t>(r), kLogPostColumn);
  }
  return d;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(slurp(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) { spill(path, value.dump(2) + "\n"); }

const char* library_version() { return INFLAQUANT_VERSION; }

}  // namespace inflaquant
