#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "locmap/errors.hpp"

namespace locmap::csv {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "binary arrays are stored little-endian");

inline constexpr std::string_view kSeparator = ", ";

/// 17 significant digits: parses back to the identical double.
inline std::string FormatReal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> SplitRow(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(Trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string JoinRow(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += kSeparator;
    out += fields[i];
  }
  return out;
}

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

/// Reads a text table: '#' lines and blank lines are skipped.
class Table {
 public:
  static Table Read(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Table t;
    t.path_ = path.string();
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const std::string_view trimmed = Trim(line);
      if (trimmed.empty() || trimmed.front() == '#') continue;
      t.rows_.push_back({n, SplitRow(trimmed)});
    }
    return t;
  }

  const std::vector<Row>& rows() const { return rows_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void Fail(const Row& row, const std::string& what) const {
    throw MalformedCsv(path_ + ":" + std::to_string(row.line) + ": " + what);
  }

  void ExpectFields(const Row& row, std::size_t lo, std::size_t hi) const {
    if (row.fields.size() < lo || row.fields.size() > hi)
      Fail(row, "expected " + std::to_string(lo) +
                    (hi != lo ? ".." + std::to_string(hi) : std::string()) +
                    " fields, got " + std::to_string(row.fields.size()));
  }

  double Real(const Row& row, std::size_t i) const {
    const std::string& s = row.fields.at(i);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      Fail(row, "field " + std::to_string(i + 1) + " is not a number: '" + s + "'");
    return v;
  }

  template <typename Int>
  Int Integer(const Row& row, std::size_t i) const {
    const std::string& s = row.fields.at(i);
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      Fail(row, "field " + std::to_string(i + 1) + " is not an integer: '" + s + "'");
    return v;
  }

  std::string Text(const Row& row, std::size_t i) const {
    const std::string& s = row.fields.at(i);
    if (s.empty()) Fail(row, "field " + std::to_string(i + 1) + " is empty");
    return s;
  }

 private:
  std::string path_;
  std::vector<Row> rows_;
};

inline void WriteFile(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

/// "# <name> version 1.0" followed by one line per row.
inline void WriteTable(const fs::path& path, std::string_view name,
                       const std::vector<std::vector<std::string>>& rows) {
  std::string content = "# " + std::string(name) + " version 1.0\n";
  for (const auto& r : rows) {
    content += JoinRow(r);
    content += '\n';
  }
  WriteFile(path, content);
}

inline std::string ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<float> ReadFloats(const fs::path& path) {
  const std::string bytes = ReadBytes(path);
  if (bytes.size() % sizeof(float) != 0)
    throw BinaryShapeMismatch(path.string() + ": size " +
                              std::to_string(bytes.size()) +
                              " is not a multiple of 4 bytes");
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

inline void WriteFloats(const fs::path& path, const std::vector<float>& data) {
  std::string bytes(data.size() * sizeof(float), '\0');
  std::memcpy(bytes.data(), data.data(), bytes.size());
  WriteFile(path, bytes);
}

}  // namespace locmap::csv
