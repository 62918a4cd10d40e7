#pragma once

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <ostream>
#include <string>
#include <vector>

namespace goodwill::io {

/// Round-trippable decimal text for a double; identical inputs give
/// identical bytes.
inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void csv_header(std::ostream& os, std::initializer_list<const char*> cols) {
  bool first = true;
  for (const char* c : cols) {
    if (!first) os << ',';
    os << c;
    first = false;
  }
  os << '\n';
}

inline void csv_row(std::ostream& os, const std::vector<double>& vals) {
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (i) os << ',';
    os << num(vals[i]);
  }
  os << '\n';
}

}  // namespace goodwill::io
