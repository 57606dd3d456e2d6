#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace qfluct {

// Columnar text table: tab-separated, one header row, deterministic
// shortest-round-trip formatting for doubles so equal data produces
// byte-identical files.
struct Table {
  std::vector<std::string> columns;
  // row-major cells, size rows * columns.size()
  std::vector<std::string> cells;

  std::size_t rows() const { return columns.empty() ? 0 : cells.size() / columns.size(); }
  void append_row(const std::vector<std::string>& row);
  const std::string& at(std::size_t row, std::size_t col) const;
  double number_at(std::size_t row, std::size_t col) const;
  std::size_t column_index(const std::string& name) const;  // throws DataError
};

std::string format_double(double v);
std::string format_int(long long v);

std::string serialize_table(const Table& t);
Table parse_table(const std::string& text);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Writes `<path>` plus a `<path>.schema.json` sidecar describing columns.
void write_table(const std::filesystem::path& path, const Table& t,
                 const std::vector<std::string>& column_descriptions);
Table read_table(const std::filesystem::path& path);

// FNV-1a 64-bit content digest, hex-encoded; used for manifest provenance.
uint64_t fnv1a64(const void* data, std::size_t size);
std::string digest_hex(const std::string& content);
std::string digest_file(const std::filesystem::path& path);

}  // namespace qfluct
