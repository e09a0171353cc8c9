#include "moesd/measurement_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "moesd/format.hpp"

namespace moesd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view text, std::string_view name, const std::string& where) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw InputError(where + ": cannot parse " + std::string(name) + " from '" +
                     std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::vector<Measurement> read_measurements_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<Measurement> out;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (view.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);

    if (!have_header) {
      if (view != kMeasurementHeader) {
        throw InputError(where + ": expected header '" + std::string(kMeasurementHeader) +
                         "'");
      }
      have_header = true;
      continue;
    }

    const auto fields = split(view);
    if (fields.size() != 6) {
      throw InputError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    }
    Measurement m;
    m.batch_size = parse_field<std::int64_t>(fields[0], "batch_size", where);
    m.draft_length = parse_field<std::int64_t>(fields[1], "gamma", where);
    m.active_per_token = parse_field<std::int64_t>(fields[2], "K", where);
    m.total_experts = parse_field<std::int64_t>(fields[3], "E", where);
    m.yield = parse_field<double>(fields[4], "sigma", where);
    m.speedup = parse_field<double>(fields[5], "speedup", where);
    try {
      validate(m);
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    out.push_back(m);
  }
  if (!have_header) throw InputError(source + ": missing header");
  return out;
}

std::vector<Measurement> read_measurements_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open measurements file '" + path + "'");
  return read_measurements_csv(in, path);
}

void write_measurements_csv(std::ostream& out, std::span<const Measurement> ms) {
  out << kMeasurementHeader << '\n';
  for (const Measurement& m : ms) {
    out << m.batch_size << ',' << m.draft_length << ',' << m.active_per_token << ','
        << m.total_experts << ',' << format_number(m.yield, true) << ','
        << format_number(m.speedup, true) << '\n';
  }
}

}  // namespace moesd
