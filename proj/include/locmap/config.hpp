#pragma once

// Reader for the small TOML subset used by pipeline files: [section] headers,
// key = value lines with strings, integers, reals, booleans and flat arrays,
// and '#' comments. Keys are addressed as "section.key".

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "locmap/csv.hpp"
#include "locmap/errors.hpp"

namespace locmap {

class TomlDoc {
 public:
  using Array = std::vector<std::string>;
  using Value = std::variant<std::string, std::int64_t, double, bool, Array>;

  static TomlDoc Parse(std::string_view text, const std::string& origin = "<toml>") {
    TomlDoc doc;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      auto fail = [&](const std::string& what) -> void {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + what);
      };
      line = csv::Trim(StripComment(line));
      if (line.empty()) {
        if (end == text.size()) break;
        continue;
      }
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) fail("malformed section header");
        section = std::string(csv::Trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) fail("expected key = value");
      const std::string key(csv::Trim(line.substr(0, eq)));
      if (key.empty()) fail("empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      auto value = ParseValue(csv::Trim(line.substr(eq + 1)));
      if (!value) fail("cannot parse value of '" + key + "'");
      if (!doc.values_.emplace(full, *value).second) fail("duplicate key '" + full + "'");
      if (end == text.size()) break;
    }
    return doc;
  }

  static TomlDoc Load(const std::filesystem::path& path) {
    std::string text;
    try {
      text = csv::ReadBytes(path);
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
    return Parse(text, path.string());
  }

  bool Has(const std::string& key) const { return values_.count(key) > 0; }

  std::string String(const std::string& key, const std::string& fallback) const {
    auto v = Find(key);
    if (!v) return fallback;
    if (auto s = std::get_if<std::string>(v)) return *s;
    throw ConfigError("'" + key + "' must be a string");
  }

  std::int64_t Int(const std::string& key, std::int64_t fallback) const {
    auto v = Find(key);
    if (!v) return fallback;
    if (auto i = std::get_if<std::int64_t>(v)) return *i;
    throw ConfigError("'" + key + "' must be an integer");
  }

  double Real(const std::string& key, double fallback) const {
    auto v = Find(key);
    if (!v) return fallback;
    if (auto d = std::get_if<double>(v)) return *d;
    if (auto i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
    throw ConfigError("'" + key + "' must be a number");
  }

  bool Bool(const std::string& key, bool fallback) const {
    auto v = Find(key);
    if (!v) return fallback;
    if (auto b = std::get_if<bool>(v)) return *b;
    throw ConfigError("'" + key + "' must be true or false");
  }

  Array StringList(const std::string& key, const Array& fallback) const {
    auto v = Find(key);
    if (!v) return fallback;
    if (auto a = std::get_if<Array>(v)) return *a;
    if (auto s = std::get_if<std::string>(v)) return {*s};
    throw ConfigError("'" + key + "' must be an array of strings");
  }

  std::vector<std::string> Keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
  }

 private:
  const Value* Find(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  static std::string_view StripComment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
  }

  static std::optional<std::string> ParseString(std::string_view s) {
    if (s.size() < 2 || s.front() != '"' || s.back() != '"') return std::nullopt;
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '"') return std::nullopt;
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char c = s[++i];
        out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
      } else {
        out += s[i];
      }
    }
    return out;
  }

  static std::optional<Value> ParseValue(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '"') {
      auto str = ParseString(s);
      if (!str) return std::nullopt;
      return Value(*str);
    }
    if (s == "true") return Value(true);
    if (s == "false") return Value(false);
    if (s.front() == '[') {
      if (s.back() != ']') return std::nullopt;
      Array items;
      const std::string_view inner = csv::Trim(s.substr(1, s.size() - 2));
      if (inner.empty()) return Value(items);
      for (const auto& raw : csv::SplitRow(inner)) {
        if (raw.empty()) return std::nullopt;
        if (raw.front() == '"') {
          auto str = ParseString(raw);
          if (!str) return std::nullopt;
          items.push_back(*str);
        } else {
          items.push_back(raw);
        }
      }
      return Value(items);
    }
    std::string digits;
    for (char c : s)
      if (c != '_') digits += c;
    const char* b = digits.data();
    const char* e = b + digits.size();
    if (digits.find_first_of(".eE") == std::string::npos || digits == "inf" || digits == "nan") {
      std::int64_t i = 0;
      if (*b == '+') ++b;
      const auto [p, ec] = std::from_chars(b, e, i);
      if (ec == std::errc() && p == e) return Value(i);
    }
    double d = 0.0;
    if (*b == '+') ++b;
    const auto [p, ec] = std::from_chars(b, e, d);
    if (ec == std::errc() && p == e) return Value(d);
    return std::nullopt;
  }

  std::map<std::string, Value> values_;
};

}  // namespace locmap
