#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moesd/calibration.hpp"

// Measurement CSV: header `batch_size,gamma,K,E,sigma,speedup`, one row per
// measurement, '.' as decimal point, no thousands separators.

namespace moesd {

inline constexpr std::string_view kMeasurementHeader = "batch_size,gamma,K,E,sigma,speedup";

/// Parses and validates every row; errors carry `source:line`.
std::vector<Measurement> read_measurements_csv(std::istream& in,
                                               const std::string& source = "<input>");
std::vector<Measurement> read_measurements_csv_file(const std::string& path);

/// Writes with round-trip exact decimal rendering.
void write_measurements_csv(std::ostream& out, std::span<const Measurement> ms);

}  // namespace moesd
