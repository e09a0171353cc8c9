#pragma once

#include <string>

namespace moesd {

/// Six significant digits, or a round-trip exact rendering when `full`.
std::string format_number(double value, bool full = false);

}  // namespace moesd
