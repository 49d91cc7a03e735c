#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace saec {

/// Fixed-point rendering with six decimals; negative zero prints as 0.000000.
inline std::string fixed6(double v) {
  if (v == 0.0) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

}  // namespace saec
