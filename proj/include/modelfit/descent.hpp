#ifndef MODELFIT_DESCENT_HPP
#define MODELFIT_DESCENT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modelfit/errors.hpp"
#include "modelfit/objective.hpp"
#include "modelfit/util.hpp"

namespace modelfit {

struct DescentOptions {
  double step = 1e-2;      // initial step size; also the cap regrowth never exceeds
  double shrink = 0.5;     // applied to the step after a rejected trial
  double grow = 1.1;       // applied after an accepted step, capped at `step`
  double grad_tol = 1e-10; // stop when ||grad||_inf falls below this
  double f_tol = 1e-16;    // stop when the relative objective decrease falls below this
  long max_iters = 100000; // cap on trial steps
  double min_step = 1e-300; // step size below which the run is declared stagnated
  bool record_trace = false;

  void validate() const {
    if (!(step > 0.0)) throw ValidationError("step must be > 0");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ValidationError("shrink must be in (0,1)");
    if (!(grow >= 1.0)) throw ValidationError("grow must be >= 1");
    if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
    if (!(min_step > 0.0)) throw ValidationError("min_step must be > 0");
  }
};

enum class ExitReason { converged, stagnated, iteration_capped };

inline const char* to_string(ExitReason r) {
  switch (r) {
    case ExitReason::converged: return "converged";
    case ExitReason::stagnated: return "stagnated";
    default: return "iteration_capped";
  }
}

struct TracePoint {
  long iter;
  double objective;
  double step;
};

struct FitResult {
  std::vector<double> params;
  double objective = 0.0;
  double grad_norm = 0.0; // ||grad||_inf at exit
  long iters = 0;         // trial steps spent (accepted + rejected)
  ExitReason exit_reason = ExitReason::converged;
  std::vector<TracePoint> trace; // accepted steps, when recorded
};

namespace detail {

inline void apply_constraint(const ConstraintMode& c, std::span<double> a) {
  switch (c.kind) {
    case ConstraintMode::Kind::none: return;
    case ConstraintMode::Kind::unit_norm: {
      const double n = norm2(a);
      if (n > 0.0)
        for (double& v : a) v /= n;
      return;
    }
    case ConstraintMode::Kind::pin:
      a[static_cast<std::size_t>(c.pin_index)] = c.pin_value;
      return;
  }
}

inline void check_feasible(const ConstraintMode& c, std::span<const double> a) {
  if (c.kind == ConstraintMode::Kind::unit_norm) {
    if (std::abs(norm2(a) - 1.0) > 1e-9)
      throw ValidationError("start point is not on the unit sphere");
  } else if (c.kind == ConstraintMode::Kind::pin) {
    if (a[static_cast<std::size_t>(c.pin_index)] != c.pin_value)
      throw ValidationError("start point does not satisfy the pin constraint");
  }
}

} // namespace detail

/// Steepest descent a_{k+1} = P(a_k - eps * grad F(a_k)) with backtracking:
/// a trial that fails to decrease F restores a_k and shrinks eps; accepted
/// steps regrow eps up to the initial value. Accepted objective values are
/// non-increasing by construction. P is the constraint projection.
inline FitResult steepest_descent(const Objective& obj, std::span<const double> start,
                                  const DescentOptions& opts,
                                  const ConstraintMode& constraint = {}) {
  opts.validate();
  constraint.validate(obj.dim);
  if (start.size() != static_cast<std::size_t>(obj.dim))
    throw ValidationError("start vector has size " + std::to_string(start.size()) +
                          ", objective dimension is " + std::to_string(obj.dim));
  detail::check_feasible(constraint, start);

  std::vector<double> a(start.begin(), start.end());
  std::vector<double> grad(a.size());
  std::vector<double> trial(a.size());
  std::vector<double> trial_grad(a.size());

  double f = obj.eval_grad(a, grad);
  if (!std::isfinite(f) || !all_finite(grad))
    throw NumericError("objective or gradient is non-finite at the start point");

  FitResult result;
  double eps = opts.step;
  long iters = 0;
  ExitReason reason = ExitReason::iteration_capped;
  if (opts.record_trace) result.trace.push_back({0, f, eps});

  while (true) {
    if (norm_inf(grad) < opts.grad_tol) {
      reason = ExitReason::converged;
      break;
    }
    if (iters >= opts.max_iters) {
      reason = ExitReason::iteration_capped;
      break;
    }
    ++iters;
    for (std::size_t k = 0; k < a.size(); ++k) trial[k] = a[k] - eps * grad[k];
    detail::apply_constraint(constraint, trial);
    const double ft = obj.eval_grad(trial, trial_grad);
    if (std::isfinite(ft) && ft <= f) {
      const double rel = (f - ft) / std::max(f, std::numeric_limits<double>::min());
      a.swap(trial);
      grad.swap(trial_grad);
      f = ft;
      eps = std::min(eps * opts.grow, opts.step);
      if (opts.record_trace) result.trace.push_back({iters, f, eps});
      if (rel < opts.f_tol) {
        reason = ExitReason::converged;
        break;
      }
    } else {
      eps *= opts.shrink;
      if (eps < opts.min_step) {
        reason = ExitReason::stagnated;
        break;
      }
    }
  }

  result.params = std::move(a);
  result.objective = f;
  result.grad_norm = norm_inf(grad);
  result.iters = iters;
  result.exit_reason = reason;
  return result;
}

/// Axis-aligned rectangle in parameter space.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }

  void validate() const {
    if (lo.empty() || lo.size() != hi.size())
      throw ValidationError("box bounds are empty or mismatched");
    for (std::size_t k = 0; k < lo.size(); ++k)
      if (!(lo[k] < hi[k])) throw ValidationError("box is degenerate on axis " + std::to_string(k + 1));
  }

  double diagonal() const {
    double s = 0.0;
    for (std::size_t k = 0; k < lo.size(); ++k) {
      const double d = hi[k] - lo[k];
      s += d * d;
    }
    return std::sqrt(s);
  }
};

inline bool lexicographically_less(std::span<const double> a, std::span<const double> b) {
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] < b[k]) return true;
    if (a[k] > b[k]) return false;
  }
  return false;
}

/// Multi-start descent: k starts drawn uniformly from the box, deterministic
/// for a given seed. Returns the best result (smallest final objective,
/// non-finite last; ties broken by lexicographically smaller parameters)
/// plus all individual results ordered by start index.
inline std::pair<FitResult, std::vector<FitResult>>
shotgun(const Objective& obj, const Box& box, int k, const DescentOptions& opts,
        std::uint64_t seed, const ConstraintMode& constraint = {}, int threads = 1) {
  box.validate();
  if (box.dim() != obj.dim)
    throw ValidationError("box dimension does not match objective dimension");
  if (k < 1) throw ValidationError("shotgun needs at least one start");

  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> starts(static_cast<std::size_t>(k));
  for (auto& s : starts) {
    s.resize(box.lo.size());
    for (std::size_t d = 0; d < s.size(); ++d)
      s[d] = box.lo[d] + (box.hi[d] - box.lo[d]) * uniform01(rng);
    detail::apply_constraint(constraint, s);
  }

  std::vector<FitResult> all(static_cast<std::size_t>(k));
  parallel_for_index(static_cast<std::size_t>(k), threads, [&](std::size_t i) {
    all[i] = steepest_descent(obj, starts[i], opts, constraint);
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < all.size(); ++i) {
    const bool best_ok = std::isfinite(all[best].objective);
    const bool cur_ok = std::isfinite(all[i].objective);
    if (!cur_ok) continue;
    if (!best_ok || all[i].objective < all[best].objective ||
        (all[i].objective == all[best].objective &&
         lexicographically_less(all[i].params, all[best].params)))
      best = i;
  }
  return {all[best], std::move(all)};
}

/// Basin-of-attraction map for 2-parameter objectives: descend from every
/// node of a resolution x resolution grid over the box and cluster the
/// converged points. labels is row-major over (i, j) node indices with node
/// coordinates (a1_i, a2_j); every label indexes into minima.
struct BasinGrid {
  Box box;
  int resolution = 0;
  std::vector<int> labels;
  std::vector<std::vector<double>> minima;
  double cluster_radius = 0.0;

  double node_coord(int axis, int idx) const {
    return box.lo[static_cast<std::size_t>(axis)] +
           (box.hi[static_cast<std::size_t>(axis)] - box.lo[static_cast<std::size_t>(axis)]) *
               static_cast<double>(idx) / static_cast<double>(resolution - 1);
  }
};

inline BasinGrid basin_map(const Objective& obj, const Box& box, int resolution,
                           const DescentOptions& opts, const ConstraintMode& constraint = {},
                           int threads = 1) {
  box.validate();
  if (obj.dim != 2 || box.dim() != 2)
    throw ValidationError("basin mapping is implemented for 2-parameter objectives only");
  if (resolution < 2) throw ValidationError("basin resolution must be >= 2");

  BasinGrid grid;
  grid.box = box;
  grid.resolution = resolution;
  grid.cluster_radius = 1e-3 * box.diagonal();

  const std::size_t count = static_cast<std::size_t>(resolution) * resolution;
  std::vector<std::vector<double>> finals(count);
  parallel_for_index(count, threads, [&](std::size_t n) {
    const int i = static_cast<int>(n) / resolution;
    const int j = static_cast<int>(n) % resolution;
    std::vector<double> start = {grid.node_coord(0, i), grid.node_coord(1, j)};
    detail::apply_constraint(constraint, start);
    finals[n] = steepest_descent(obj, start, opts, constraint).params;
  });

  grid.labels.resize(count, -1);
  for (std::size_t n = 0; n < count; ++n) {
    int label = -1;
    for (std::size_t c = 0; c < grid.minima.size(); ++c) {
      if (dist2(finals[n], grid.minima[c]) <= grid.cluster_radius) {
        label = static_cast<int>(c);
        break;
      }
    }
    if (label < 0) {
      grid.minima.push_back(finals[n]);
      label = static_cast<int>(grid.minima.size()) - 1;
    }
    grid.labels[n] = label;
  }
  return grid;
}

/// Exports labels as `a1,a2,label` rows (node coordinates, cluster id).
inline void save_basin_csv(const BasinGrid& grid, std::ostream& out) {
  out << "a1,a2,label\n";
  for (int i = 0; i < grid.resolution; ++i)
    for (int j = 0; j < grid.resolution; ++j)
      out << format_double17(grid.node_coord(0, i)) << ','
          << format_double17(grid.node_coord(1, j)) << ','
          << grid.labels[static_cast<std::size_t>(i) * grid.resolution + j] << '\n';
}

/// Exports a descent trace as `iter,F,step` rows.
inline void save_trace_csv(const FitResult& fit, std::ostream& out) {
  out << "iter,F,step\n";
  for (const TracePoint& p : fit.trace)
    out << p.iter << ',' << format_double17(p.objective) << ',' << format_double17(p.step)
        << '\n';
}

} // namespace modelfit

#endif // MODELFIT_DESCENT_HPP
