#include "moesd/format.hpp"

#include <cmath>
#include <cstdio>

namespace moesd {

std::string format_number(double value, bool full) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, full ? "%.17g" : "%.6g", value);
  return buf;
}

}  // namespace moesd
