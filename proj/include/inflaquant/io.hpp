#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inflaquant/engine.hpp"

namespace inflaquant {

// RFC-4180 table. Every row has header.size() fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // -1 when absent.
  long column_index(const std::string& name) const;
  const std::string& at(std::size_t row, const std::string& column) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

// 17 significant digits; round-trips every finite double.
std::string format_double(double v);
// Throws DataValidationError naming the row and column on failure.
double parse_double(const std::string& field, std::size_t row, const std::string& column);

Vector numeric_column(const CsvTable& table, const std::string& name);

// One row per retained draw; parameter columns followed by log_post.
void write_chain_csv(const std::filesystem::path& path, const ChainDraws& draws);
ChainDraws read_chain_csv(const std::filesystem::path& path, int chain_id);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

inline constexpr const char* kLogPostColumn = "log_post";
const char* library_version();

}  // namespace inflaquant
