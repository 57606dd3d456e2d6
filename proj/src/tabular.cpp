#include "qfluct/tabular.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qfluct/errors.hpp"

namespace qfluct {

void Table::append_row(const std::vector<std::string>& row) {
  if (row.size() != columns.size())
    throw DataError("table row width " + std::to_string(row.size()) +
                    " does not match header width " + std::to_string(columns.size()));
  cells.insert(cells.end(), row.begin(), row.end());
}

const std::string& Table::at(std::size_t row, std::size_t col) const {
  return cells.at(row * columns.size() + col);
}

double Table::number_at(std::size_t row, std::size_t col) const {
  const std::string& s = at(row, col);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw DataError("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("cell '" + s + "' is not numeric (row " + std::to_string(row) +
                    ", column '" + columns[col] + "')");
  }
}

std::size_t Table::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw DataError("missing column '" + name + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_int(long long v) { return std::to_string(v); }

std::string serialize_table(const Table& t) {
  std::string out;
  out.reserve(t.cells.size() * 12 + 64);
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (c) out += '\t';
    out += t.columns[c];
  }
  out += '\n';
  const std::size_t w = t.columns.size();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (c) out += '\t';
      out += t.cells[r * w + c];
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

Table parse_table(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty table");
  t.columns = split_tabs(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_tabs(line);
    t.append_row(row);
  }
  return t;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("short write: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_table(const std::filesystem::path& path, const Table& t,
                 const std::vector<std::string>& column_descriptions) {
  if (!column_descriptions.empty() && column_descriptions.size() != t.columns.size())
    throw DataError("schema description count does not match column count");
  write_text_file(path, serialize_table(t));
  std::string schema = "{\n  \"format\": \"tsv\",\n  \"columns\": [\n";
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    schema += "    {\"name\": \"" + t.columns[c] + "\", \"description\": \"" +
              (column_descriptions.empty() ? std::string() : column_descriptions[c]) + "\"}";
    schema += c + 1 < t.columns.size() ? ",\n" : "\n";
  }
  schema += "  ]\n}\n";
  write_text_file(path.string() + ".schema.json", schema);
}

Table read_table(const std::filesystem::path& path) { return parse_table(read_text_file(path)); }

uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xCBF29CE484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string digest_hex(const std::string& content) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(content.data(), content.size())));
  return std::string(buf);
}

std::string digest_file(const std::filesystem::path& path) {
  return digest_hex(read_text_file(path));
}

}  // namespace qfluct
