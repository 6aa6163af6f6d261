#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "srcmix/errors.hpp"
#include "srcmix/textio.hpp"

namespace srcmix {

/// Flat key=value text config. '#' starts a comment, blank lines are
/// ignored, repeated keys accumulate in order (used for source sections).
class Config {
 public:
  Config() = default;

  static Config parse(std::istream& in) {
    Config cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string body = strip(line);
      if (body.empty()) continue;
      const std::size_t eq = body.find('=');
      if (eq == std::string::npos)
        throw ParseError("config line " + std::to_string(line_no) +
                         ": expected 'key = value'");
      const std::string key = strip(body.substr(0, eq));
      const std::string value = strip(body.substr(eq + 1));
      if (key.empty())
        throw ParseError("config line " + std::to_string(line_no) + ": empty key");
      cfg.entries_.emplace_back(key, value);
    }
    return cfg;
  }

  static Config parse(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  bool has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  std::string get_string(const std::string& key, const std::string& fallback = {}) const {
    std::string out = fallback;
    for (const auto& [k, v] : entries_)
      if (k == key) out = v;  // last occurrence wins for scalar keys
    return out;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    unsigned long long v = 0;
    if (!parse_u64(get_string(key), &v))
      throw ValidationError("config: key '" + key + "' is not a non-negative integer");
    return v;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    double v = 0.0;
    if (!parse_double(get_string(key), &v))
      throw ValidationError("config: key '" + key + "' is not a number");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: key '" + key + "' is not a boolean");
  }

  /// All values for a repeated key, in file order.
  std::vector<std::string> get_all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (k == key) out.push_back(v);
    return out;
  }

  /// Rejects keys outside the allowed set (typo guard for CLI configs).
  void require_known(const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : entries_) {
      bool ok = false;
      for (const auto& a : allowed)
        if (k == a) {
          ok = true;
          break;
        }
      if (!ok) throw ValidationError("config: unknown key '" + k + "'");
    }
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Comma-separated list helper for flag values like "a,b,c".
inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(strip(cur));
  return out;
}

}  // namespace srcmix
