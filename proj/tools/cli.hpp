#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace moesd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitDomainError = 2;
inline constexpr int kExitSuiteFailure = 3;

/// Runs one command line (without the program name); returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "a:b" (inclusive), "a:b:step" or "a,b,c". Throws InputError on empty,
/// descending or non-positive ranges.
std::vector<std::int64_t> parse_batch_range(const std::string& text);

/// Comma-separated positive integers.
std::vector<std::int64_t> parse_int_list(const std::string& text, const std::string& what);

}  // namespace moesd::cli
