#pragma once

#include <charconv>
#include <string>

namespace reflectsim {

// Shortest-safe numeric text for CSV output: 9 significant digits, '.' decimal
// separator regardless of locale.
inline std::string num(double v) {
  if (v == 0.0) return "0";  // also folds -0
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, r.ptr);
}

}  // namespace reflectsim
