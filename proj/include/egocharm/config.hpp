#pragma once

// Plain-text "key = value" files. '#' starts a comment; blank lines are ignored.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "egocharm/error.hpp"

namespace egocharm {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    require(eq != std::string::npos, ErrorCode::SpecParseError,
            "line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    require(!key.empty(), ErrorCode::SpecParseError, "line " + std::to_string(line_no) + ": empty key");
    require(!kv.contains(key), ErrorCode::SpecParseError, "key '" + key + "' given twice");
    kv[key] = value;
  }
  return kv;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

/// Typed reads that report the offending key on failure.
class KeyReader {
 public:
  explicit KeyReader(const KeyValues& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.contains(key); }

  std::string text(const std::string& key) const { return at(key); }

  double number(const std::string& key) const {
    const std::string& v = at(key);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && ptr == v.data() + v.size(), ErrorCode::SpecParseError,
            "key '" + key + "': '" + v + "' is not a number");
    return out;
  }

  std::size_t count(const std::string& key) const { return parse_count(key, at(key)); }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(at(key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_count(key, detail::trim(item)));
    require(!out.empty(), ErrorCode::SpecParseError, "key '" + key + "': empty list");
    return out;
  }

  /// Throws naming the first key not in the allowed set.
  void reject_unknown(const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : kv_) {
      bool known = false;
      for (const auto& a : allowed) known = known || a == k;
      require(known, ErrorCode::SpecParseError, "unknown key '" + k + "'");
    }
  }

 private:
  const std::string& at(const std::string& key) const {
    auto it = kv_.find(key);
    require(it != kv_.end(), ErrorCode::SpecParseError, "missing key '" + key + "'");
    return it->second;
  }

  static std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    require(ec == std::errc() && ptr == v.data() + v.size() && !v.empty(), ErrorCode::SpecParseError,
            "key '" + key + "': '" + v + "' is not a non-negative integer");
    return out;
  }

  const KeyValues& kv_;
};

}  // namespace egocharm
