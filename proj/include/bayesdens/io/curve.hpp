#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bayesdens/errors.hpp"
#include "bayesdens/sample.hpp"

namespace bayesdens::io {

using Json = nlohmann::ordered_json;

/// Density values on a grid plus the run metadata written next to them.
struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> values;
  Json metadata = Json::object();

  /// Trapezoid integral over the grid; 0 for a single point.
  double integral() const {
    double s = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) s += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
    return s;
  }
};

/// Nine significant digits in the C locale.
inline std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline ParseError line_error(const std::string& source, std::size_t line, const std::string& what) {
  return ParseError(source + ": line " + std::to_string(line) + ": " + what);
}

}  // namespace detail

/// Reads one column of reals. Without a column name the input is either
/// newline-delimited numbers or a one-column CSV whose first line is a
/// header; with a name the first line must be a header containing it.
/// Blank lines are skipped.
inline std::vector<double> read_column(std::istream& in, const std::optional<std::string>& column,
                                       const std::string& source = "input") {
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> index;
  std::size_t fields = 1;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view text = detail::trim(line);
    if (text.empty()) continue;
    const auto cells = detail::split_fields(text);
    if (!header_seen) {
      header_seen = true;
      if (column) {
        for (std::size_t j = 0; j < cells.size(); ++j) {
          if (cells[j] == *column) index = j;
        }
        if (!index) throw detail::line_error(source, lineno, "no column named '" + *column + "' in the header");
        fields = cells.size();
        continue;
      }
      if (cells.size() > 1) throw detail::line_error(source, lineno, "several columns; select one with --column");
      index = 0;
      if (!detail::parse_real(cells[0])) continue;  // one-column header
    }
    if (cells.size() != fields) {
      throw detail::line_error(source, lineno, "expected " + std::to_string(fields) + " fields, found " +
                                                   std::to_string(cells.size()));
    }
    const auto v = detail::parse_real(cells[*index]);
    if (!v) throw detail::line_error(source, lineno, "cannot parse '" + std::string(cells[*index]) + "' as a finite real");
    values.push_back(*v);
  }
  if (values.empty()) throw ParseError(source + ": no observations");
  return values;
}

/// Sorted sample from a file; see read_column for the accepted layouts.
inline Sample ingest(const std::string& path, const std::optional<std::string>& column = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return Sample(read_column(in, column, path));
}

inline void write_csv(std::ostream& out, const DensityCurve& curve) {
  out << "x,density\n";
  for (std::size_t i = 0; i < curve.grid.size(); ++i) {
    out << format_number(curve.grid[i]) << ',' << format_number(curve.values[i]) << '\n';
  }
}

inline std::string to_csv(const DensityCurve& curve) {
  std::ostringstream s;
  write_csv(s, curve);
  return s.str();
}

/// Inverse of write_csv.
inline DensityCurve read_csv(std::istream& in, const std::string& source = "curve") {
  DensityCurve curve;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (detail::trim(line) != "x,density") throw detail::line_error(source, 1, "expected header 'x,density'");
      continue;
    }
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_fields(line);
    const auto x = cells.size() == 2 ? detail::parse_real(cells[0]) : std::nullopt;
    const auto y = cells.size() == 2 ? detail::parse_real(cells[1]) : std::nullopt;
    if (!x || !y) throw detail::line_error(source, lineno, "expected two finite reals");
    curve.grid.push_back(*x);
    curve.values.push_back(*y);
  }
  return curve;
}

inline void write_metadata(std::ostream& out, const Json& meta) { out << meta.dump(2) << '\n'; }

/// Writes `text` to `path`, or to stdout when the path is empty or "-".
inline void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << text;
}

}  // namespace bayesdens::io
