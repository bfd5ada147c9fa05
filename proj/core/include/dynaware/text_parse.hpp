#pragma once

#include <charconv>
#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynaware {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// "a, b,c" -> {"a", "b", "c"}; empty input gives an empty list.
inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::size_t parse_size(const std::string& s) {
  const std::string t = trim(s);
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size()) throw std::invalid_argument("not a non-negative integer: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  const std::string t = trim(s);
  long long v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& s) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size()) throw std::invalid_argument("not an unsigned integer: '" + s + "'");
  return v;
}

inline double parse_double(const std::string& s) {
  const std::string t = trim(s);
  double v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw std::invalid_argument("not a boolean: '" + s + "'");
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace dynaware
