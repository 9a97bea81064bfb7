#ifndef MODELFIT_INTEGRATE_HPP
#define MODELFIT_INTEGRATE_HPP

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "modelfit/data.hpp"
#include "modelfit/errors.hpp"
#include "modelfit/expr.hpp"

namespace modelfit {

enum class SegmentKind { polygon, euler };

/// Piecewise-linear trajectory over the data times. The polygon kind
/// interpolates the data and is continuous; the euler kind restarts every
/// segment at the datum with slope f(t_i, x(t_i)), so it is right-continuous
/// and may jump at interior breakpoints.
class PiecewiseTrajectory {
public:
  PiecewiseTrajectory(SegmentKind kind, std::vector<double> times,
                      std::vector<double> base, std::vector<double> slope, int dim)
      : kind_(kind), times_(std::move(times)), base_(std::move(base)),
        slope_(std::move(slope)), dim_(dim) {}

  SegmentKind kind() const { return kind_; }
  int dim() const { return dim_; }
  const std::vector<double>& breakpoints() const { return times_; }
  int segment_count() const { return static_cast<int>(times_.size()) - 1; }

  /// Value at t in [t_1, t_{n+1}]; exact at every breakpoint. At interior
  /// breakpoints the right limit is returned (they agree for polygons).
  void eval(double t, std::span<double> out) const {
    if (out.size() != static_cast<std::size_t>(dim_))
      throw ValidationError("output buffer has wrong dimension");
    if (!(t >= times_.front() && t <= times_.back()))
      throw ValidationError("evaluation time " + std::to_string(t) +
                            " outside trajectory domain [" + std::to_string(times_.front()) +
                            ", " + std::to_string(times_.back()) + "]");
    if (t == times_.back() && kind_ == SegmentKind::polygon) {
      // Interpolation property holds exactly at the final datum, which
      // polygon_interpolant stores as one extra row after the segments.
      const double* last = base_.data() + (times_.size() - 1) * static_cast<std::size_t>(dim_);
      for (int c = 0; c < dim_; ++c) out[static_cast<std::size_t>(c)] = last[c];
      return;
    }
    const int seg = segment_index(t);
    const double dt = t - times_[static_cast<std::size_t>(seg)];
    const double* b = base_.data() + static_cast<std::size_t>(seg) * dim_;
    const double* s = slope_.data() + static_cast<std::size_t>(seg) * dim_;
    for (int c = 0; c < dim_; ++c) out[static_cast<std::size_t>(c)] = b[c] + s[c] * dt;
  }

  std::vector<double> eval(double t) const {
    std::vector<double> out(static_cast<std::size_t>(dim_));
    eval(t, out);
    return out;
  }

  /// Left limit at the end of segment i, i.e. the value approached as
  /// t -> t_{i+2}^-. For polygons this equals the next datum.
  std::vector<double> segment_end(int i) const {
    if (i < 0 || i >= segment_count()) throw ValidationError("segment index out of range");
    const double dt = times_[static_cast<std::size_t>(i) + 1] - times_[static_cast<std::size_t>(i)];
    std::vector<double> out(static_cast<std::size_t>(dim_));
    const double* b = base_.data() + static_cast<std::size_t>(i) * dim_;
    const double* s = slope_.data() + static_cast<std::size_t>(i) * dim_;
    for (int c = 0; c < dim_; ++c) out[static_cast<std::size_t>(c)] = b[c] + s[c] * dt;
    return out;
  }

private:
  SegmentKind kind_;
  std::vector<double> times_;
  std::vector<double> base_;  // row-major, one row per segment (value at t_i)
  std::vector<double> slope_; // row-major, one row per segment
  int dim_;

  int segment_index(double t) const {
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    int seg = static_cast<int>(it - times_.begin()) - 1;
    seg = std::clamp(seg, 0, segment_count() - 1);
    return seg;
  }

  friend PiecewiseTrajectory polygon_interpolant(const TimeSeries& ts);
};

/// P(t): the continuous polygon through the data points.
inline PiecewiseTrajectory polygon_interpolant(const TimeSeries& ts) {
  const int n = ts.sample_count() - 1;
  const int d = ts.dim;
  std::vector<double> base(static_cast<std::size_t>(n) * d);
  std::vector<double> slope(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    const double dt = ts.times[static_cast<std::size_t>(i) + 1] - ts.times[static_cast<std::size_t>(i)];
    const auto x0 = ts.state(i);
    const auto x1 = ts.state(i + 1);
    for (int c = 0; c < d; ++c) {
      base[static_cast<std::size_t>(i) * d + c] = x0[static_cast<std::size_t>(c)];
      slope[static_cast<std::size_t>(i) * d + c] =
          (x1[static_cast<std::size_t>(c)] - x0[static_cast<std::size_t>(c)]) / dt;
    }
  }
  PiecewiseTrajectory traj(SegmentKind::polygon, ts.times, std::move(base), std::move(slope), d);
  // Keep the final datum reachable for exact endpoint evaluation.
  traj.base_.insert(traj.base_.end(), ts.state(n).begin(), ts.state(n).end());
  return traj;
}

/// p(t): per-interval Euler ray x(t_i) + f(a, t_i, x(t_i)) (t - t_i),
/// restarting at each datum exactly as defined.
inline PiecewiseTrajectory euler_piecewise(const ModelExpr& model, std::span<const double> a,
                                           const TimeSeries& ts) {
  if (model.state_dim() != ts.dim || model.output_dim() != ts.dim)
    throw ValidationError("model dimensions do not match the series");
  const int n = ts.sample_count() - 1;
  const int d = ts.dim;
  std::vector<double> base(static_cast<std::size_t>(n) * d);
  std::vector<double> slope(static_cast<std::size_t>(n) * d);
  EvalScratch scratch;
  std::vector<double> f(static_cast<std::size_t>(d));
  for (int i = 0; i < n; ++i) {
    model.eval(a, ts.times[static_cast<std::size_t>(i)], ts.state(i), f, scratch);
    if (!all_finite(f))
      throw NumericError("model is non-finite at datum " + std::to_string(i + 1));
    const auto x0 = ts.state(i);
    for (int c = 0; c < d; ++c) {
      base[static_cast<std::size_t>(i) * d + c] = x0[static_cast<std::size_t>(c)];
      slope[static_cast<std::size_t>(i) * d + c] = f[static_cast<std::size_t>(c)];
    }
  }
  return PiecewiseTrajectory(SegmentKind::euler, ts.times, std::move(base), std::move(slope), d);
}

/// Dense fixed-step solution samples. `truncated` marks a run stopped early
/// because a state component left [-1e12, 1e12] or went non-finite; samples
/// up to the last good step are kept.
struct Trajectory {
  std::vector<double> times;
  std::vector<double> states; // row-major, times.size() x dim
  int dim = 0;
  bool truncated = false;

  int sample_count() const { return static_cast<int>(times.size()); }
  std::span<const double> state(int i) const {
    return {states.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }

  /// Linear interpolation between stored samples.
  std::vector<double> eval(double t) const {
    if (!(t >= times.front() && t <= times.back()))
      throw ValidationError("evaluation time outside trajectory samples");
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    int i = static_cast<int>(it - times.begin()) - 1;
    i = std::clamp(i, 0, sample_count() - 2);
    const double w = (t - times[static_cast<std::size_t>(i)]) /
                     (times[static_cast<std::size_t>(i) + 1] - times[static_cast<std::size_t>(i)]);
    std::vector<double> out(static_cast<std::size_t>(dim));
    const auto s0 = state(i);
    const auto s1 = state(i + 1);
    for (int c = 0; c < dim; ++c)
      out[static_cast<std::size_t>(c)] = (1.0 - w) * s0[static_cast<std::size_t>(c)] +
                                         w * s1[static_cast<std::size_t>(c)];
    return out;
  }
};

inline constexpr double kTrajectoryStateCap = 1e12;

/// Classical fixed-step RK4 for y' = f(a, t, y); the final step is shortened
/// to land exactly on t_end.
inline Trajectory rk4_solve(const ModelExpr& model, std::span<const double> a, double t0,
                            std::span<const double> x0, double t_end, double h) {
  if (!(h > 0.0)) throw ValidationError("step size must be > 0");
  if (!(t_end > t0)) throw ValidationError("t_end must exceed t0");
  if (model.state_dim() != static_cast<int>(x0.size()) ||
      model.output_dim() != static_cast<int>(x0.size()))
    throw ValidationError("model dimensions do not match the initial state");

  const int d = static_cast<int>(x0.size());
  EvalScratch scratch;
  std::vector<double> k1(static_cast<std::size_t>(d)), k2(k1), k3(k1), k4(k1), tmp(k1);
  std::vector<double> y(x0.begin(), x0.end());

  Trajectory traj;
  traj.dim = d;
  traj.times.push_back(t0);
  traj.states.insert(traj.states.end(), y.begin(), y.end());

  model.eval(a, t0, y, k1, scratch);
  if (!all_finite(k1)) throw NumericError("model is non-finite at the initial state");

  double t = t0;
  long step = 0;
  while (t < t_end) {
    // Track the grid as t0 + k*h so rounding does not drift, and shorten the
    // final step to land exactly on t_end.
    double t_next = t0 + static_cast<double>(step + 1) * h;
    if (t_next > t_end - 1e-12 * h) t_next = t_end;
    const double hh = t_next - t;
    if (!(hh > 0.0)) throw NumericError("integration step underflow");
    model.eval(a, t, y, k1, scratch);
    for (int c = 0; c < d; ++c)
      tmp[static_cast<std::size_t>(c)] = y[static_cast<std::size_t>(c)] + 0.5 * hh * k1[static_cast<std::size_t>(c)];
    model.eval(a, t + 0.5 * hh, tmp, k2, scratch);
    for (int c = 0; c < d; ++c)
      tmp[static_cast<std::size_t>(c)] = y[static_cast<std::size_t>(c)] + 0.5 * hh * k2[static_cast<std::size_t>(c)];
    model.eval(a, t + 0.5 * hh, tmp, k3, scratch);
    for (int c = 0; c < d; ++c)
      tmp[static_cast<std::size_t>(c)] = y[static_cast<std::size_t>(c)] + hh * k3[static_cast<std::size_t>(c)];
    model.eval(a, t + hh, tmp, k4, scratch);
    bool ok = true;
    for (int c = 0; c < d; ++c) {
      const double next = y[static_cast<std::size_t>(c)] +
                          hh / 6.0 *
                              (k1[static_cast<std::size_t>(c)] + 2.0 * k2[static_cast<std::size_t>(c)] +
                               2.0 * k3[static_cast<std::size_t>(c)] + k4[static_cast<std::size_t>(c)]);
      tmp[static_cast<std::size_t>(c)] = next;
      if (!std::isfinite(next) || std::abs(next) > kTrajectoryStateCap) ok = false;
    }
    if (!ok) {
      traj.truncated = true;
      break;
    }
    y = tmp;
    t = t_next;
    ++step;
    traj.times.push_back(t);
    traj.states.insert(traj.states.end(), y.begin(), y.end());
  }
  return traj;
}

/// Exports samples as `t,y1..yd` rows.
inline void save_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  out << 't';
  for (int c = 1; c <= traj.dim; ++c) out << ",y" << c;
  out << '\n';
  for (int i = 0; i < traj.sample_count(); ++i) {
    out << format_double17(traj.times[static_cast<std::size_t>(i)]);
    for (double v : traj.state(i)) out << ',' << format_double17(v);
    out << '\n';
  }
}

} // namespace modelfit

#endif // MODELFIT_INTEGRATE_HPP
