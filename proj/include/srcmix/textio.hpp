#pragma once

#include <charconv>
#include <cstdio>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace srcmix {

/// Shortest decimal form that parses back to the identical double
/// (std::to_chars round-trip guarantee). Locale-independent.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

/// Locale-independent strict double parse of an entire field.
inline bool parse_double(const std::string& s, double* out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, *out);
  return ec == std::errc() && p == e;
}

inline bool parse_u64(const std::string& s, unsigned long long* out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, *out);
  return ec == std::errc() && p == e;
}

inline std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream iss(line);
  std::string f;
  while (iss >> f) fields.push_back(f);
  return fields;
}

inline std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace srcmix
