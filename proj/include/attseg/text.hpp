#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

#include "attseg/errors.hpp"

namespace attseg {

// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw UsageError("invalid number '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, std::string_view what) {
  Int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw UsageError("invalid integer '" + std::string(s) + "' for " + std::string(what));
  }
  return v;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace attseg
