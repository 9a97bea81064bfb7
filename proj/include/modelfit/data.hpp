#ifndef MODELFIT_DATA_HPP
#define MODELFIT_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modelfit/errors.hpp"
#include "modelfit/util.hpp"

namespace modelfit {

/// Observations {(t_i, x(t_i))} with strictly increasing times and finite
/// vector values. Immutable after construction.
struct TimeSeries {
  std::vector<double> times;
  std::vector<double> values; // row-major, sample_count x dim
  int dim = 0;

  int sample_count() const { return static_cast<int>(times.size()); }

  std::span<const double> state(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }

  static TimeSeries create(std::vector<double> ts, std::vector<double> vals, int dim) {
    TimeSeries s{std::move(ts), std::move(vals), dim};
    s.validate();
    return s;
  }

  void validate() const {
    if (dim < 1) throw ValidationError("time series needs at least one value column");
    if (times.size() < 2) throw ValidationError("time series needs at least 2 samples");
    if (values.size() != times.size() * static_cast<std::size_t>(dim))
      throw ValidationError("time series value matrix does not match times length");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
      if (!(times[i] < times[i + 1]))
        throw ValidationError("times not strictly increasing at row " + std::to_string(i + 2));
    for (double t : times)
      if (!std::isfinite(t)) throw ValidationError("non-finite time value");
    if (!all_finite(values)) throw ValidationError("non-finite observation value");
  }
};

/// Per-series constants used by the error bounds: gap extremes over the
/// consecutive time differences and the largest difference-quotient norm.
struct SeriesStats {
  double min_gap = 0.0;   // smallest t_{i+1} - t_i
  double max_gap = 0.0;   // largest  t_{i+1} - t_i
  double max_slope = 0.0; // max_i ||x_{i+1} - x_i|| / (t_{i+1} - t_i)
  double t_first = 0.0;
  double t_last = 0.0;
};

/// Lower/upper shifted copies of a series for measurement-noise analysis.
struct NoisePair {
  TimeSeries lower;
  TimeSeries upper;
  double epsilon = 0.0;
};

/// Scalar field u(x_i, t_j) on a full rectangular grid, both axes strictly
/// increasing with at least 3 points (second-order stencils need them).
struct GridField {
  std::vector<double> xs;
  std::vector<double> ts;
  std::vector<double> u; // row-major, xs.size() x ts.size()

  int nx() const { return static_cast<int>(xs.size()); }
  int nt() const { return static_cast<int>(ts.size()); }
  double at(int i, int j) const {
    return u[static_cast<std::size_t>(i) * ts.size() + static_cast<std::size_t>(j)];
  }

  static GridField create(std::vector<double> xs_, std::vector<double> ts_,
                          std::vector<double> u_) {
    GridField g{std::move(xs_), std::move(ts_), std::move(u_)};
    g.validate();
    return g;
  }

  void validate() const {
    if (xs.size() < 3 || ts.size() < 3)
      throw ValidationError("grid needs at least 3 points per axis");
    if (u.size() != xs.size() * ts.size())
      throw ValidationError("grid value array does not match axis lengths");
    auto check_axis = [](const std::vector<double>& axis, const char* name) {
      for (std::size_t i = 0; i + 1 < axis.size(); ++i)
        if (!(axis[i] < axis[i + 1]))
          throw ValidationError(std::string(name) + " axis not strictly increasing");
    };
    check_axis(xs, "x");
    check_axis(ts, "t");
    if (!all_finite(u)) throw ValidationError("non-finite grid value");
  }
};

namespace csv_detail {

inline std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_cell(std::string_view cell, std::size_t line_no, std::size_t col) {
  cell = trim(cell);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw ValidationError("non-numeric cell '" + std::string(cell) + "' at line " +
                          std::to_string(line_no) + ", column " + std::to_string(col + 1));
  if (!std::isfinite(v))
    throw ValidationError("non-finite value at line " + std::to_string(line_no));
  return v;
}

/// Reads all non-empty lines; a trailing newline does not create a row.
inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (!sv.empty()) lines.emplace_back(sv);
  }
  return lines;
}

} // namespace csv_detail

/// CSV with mandatory header `t,x1,...,xd`. Times must arrive strictly
/// increasing; out-of-order data is rejected rather than sorted.
inline TimeSeries load_time_series(std::istream& in) {
  using namespace csv_detail;
  const std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) throw ValidationError("empty CSV input");
  const auto header = split_line(lines[0]);
  if (trim(header[0]) != "t")
    throw ValidationError("time series header must start with 't'");
  if (header.size() < 2)
    throw ValidationError("time series header needs at least one x column");
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string expected = "x" + std::to_string(c);
    if (trim(header[c]) != expected)
      throw ValidationError("expected header column '" + expected + "', got '" +
                            std::string(trim(header[c])) + "'");
  }
  const int dim = static_cast<int>(header.size()) - 1;
  if (lines.size() < 3) throw ValidationError("time series needs at least 2 data rows");
  std::vector<double> times, values;
  times.reserve(lines.size() - 1);
  values.reserve((lines.size() - 1) * static_cast<std::size_t>(dim));
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_line(lines[li]);
    if (cells.size() != header.size())
      throw ValidationError("row at line " + std::to_string(li + 1) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
    times.push_back(parse_cell(cells[0], li + 1, 0));
    for (std::size_t c = 1; c < cells.size(); ++c)
      values.push_back(parse_cell(cells[c], li + 1, c));
  }
  return TimeSeries::create(std::move(times), std::move(values), dim);
}

inline TimeSeries load_time_series(const std::string& text) {
  std::istringstream in(text);
  return load_time_series(in);
}

/// Writes with 17 significant digits so a reload is bit-exact.
inline void save_time_series(const TimeSeries& ts, std::ostream& out) {
  out << 't';
  for (int c = 1; c <= ts.dim; ++c) out << ",x" << c;
  out << '\n';
  for (int i = 0; i < ts.sample_count(); ++i) {
    out << format_double17(ts.times[static_cast<std::size_t>(i)]);
    for (double v : ts.state(i)) out << ',' << format_double17(v);
    out << '\n';
  }
}

inline SeriesStats series_stats(const TimeSeries& ts) {
  SeriesStats s;
  s.t_first = ts.times.front();
  s.t_last = ts.times.back();
  s.min_gap = std::numeric_limits<double>::infinity();
  s.max_gap = 0.0;
  s.max_slope = 0.0;
  for (int i = 0; i + 1 < ts.sample_count(); ++i) {
    const double gap = ts.times[static_cast<std::size_t>(i) + 1] - ts.times[static_cast<std::size_t>(i)];
    s.min_gap = std::min(s.min_gap, gap);
    s.max_gap = std::max(s.max_gap, gap);
    const auto a = ts.state(i);
    const auto b = ts.state(i + 1);
    double d2 = 0.0;
    for (int c = 0; c < ts.dim; ++c) {
      const double d = b[static_cast<std::size_t>(c)] - a[static_cast<std::size_t>(c)];
      d2 += d * d;
    }
    s.max_slope = std::max(s.max_slope, std::sqrt(d2) / gap);
  }
  return s;
}

/// x(t_i) -> x(t_i) -/+ epsilon in every component.
inline NoisePair perturb_series(const TimeSeries& ts, double epsilon) {
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
  NoisePair pair;
  pair.epsilon = epsilon;
  pair.lower = ts;
  pair.upper = ts;
  for (double& v : pair.lower.values) v -= epsilon;
  for (double& v : pair.upper.values) v += epsilon;
  return pair;
}

/// CSV with header `x,t,u`, one row per node, in any order; the set of rows
/// must form a complete rectangle.
inline GridField load_grid(std::istream& in) {
  using namespace csv_detail;
  const std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) throw ValidationError("empty CSV input");
  const auto header = split_line(lines[0]);
  if (header.size() != 3 || trim(header[0]) != "x" || trim(header[1]) != "t" ||
      trim(header[2]) != "u")
    throw ValidationError("grid header must be 'x,t,u'");
  std::map<std::pair<double, double>, double> nodes;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_line(lines[li]);
    if (cells.size() != 3)
      throw ValidationError("row at line " + std::to_string(li + 1) + " has " +
                            std::to_string(cells.size()) + " cells, expected 3");
    const double x = parse_cell(cells[0], li + 1, 0);
    const double t = parse_cell(cells[1], li + 1, 1);
    const double u = parse_cell(cells[2], li + 1, 2);
    if (!nodes.emplace(std::make_pair(x, t), u).second)
      throw ValidationError("duplicate grid node at line " + std::to_string(li + 1));
  }
  std::vector<double> xs, ts;
  for (const auto& [key, val] : nodes) {
    (void)val;
    if (xs.empty() || xs.back() != key.first) xs.push_back(key.first);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (const auto& [key, val] : nodes) {
    (void)val;
    ts.push_back(key.second);
  }
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  if (nodes.size() != xs.size() * ts.size())
    throw ValidationError("grid is not rectangular: " + std::to_string(nodes.size()) +
                          " nodes, axes imply " + std::to_string(xs.size() * ts.size()));
  std::vector<double> u;
  u.reserve(nodes.size());
  for (double x : xs)
    for (double t : ts) {
      const auto it = nodes.find({x, t});
      if (it == nodes.end())
        throw ValidationError("grid is missing a node"); // unreachable given the count check
      u.push_back(it->second);
    }
  return GridField::create(std::move(xs), std::move(ts), std::move(u));
}

inline GridField load_grid(const std::string& text) {
  std::istringstream in(text);
  return load_grid(in);
}

inline void save_grid(const GridField& g, std::ostream& out) {
  out << "x,t,u\n";
  for (int i = 0; i < g.nx(); ++i)
    for (int j = 0; j < g.nt(); ++j)
      out << format_double17(g.xs[static_cast<std::size_t>(i)]) << ','
          << format_double17(g.ts[static_cast<std::size_t>(j)]) << ','
          << format_double17(g.at(i, j)) << '\n';
}

} // namespace modelfit

#endif // MODELFIT_DATA_HPP
