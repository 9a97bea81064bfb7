#ifndef MODELFIT_TESTS_HELPERS_HPP
#define MODELFIT_TESTS_HELPERS_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "modelfit/data.hpp"
#include "modelfit/expr.hpp"
#include "modelfit/util.hpp"

namespace testutil {

// The running example used throughout: x' = x^2 + 2x with x(0) = 1, whose
// exact solution is x(t) = -2 e^{2t} / (e^{2t} - 3). It blows up at
// t = ln(3)/2 ~ 0.5493.
inline double reference_solution(double t) {
  return -2.0 * std::exp(2.0 * t) / (std::exp(2.0 * t) - 3.0);
}

/// Samples the closed form on [t0, t1] with n_gaps uniform gaps (n_gaps + 1
/// rows, both endpoints included).
inline modelfit::TimeSeries sample_reference(double t0, double t1, int n_gaps) {
  std::vector<double> times, values;
  for (int i = 0; i <= n_gaps; ++i) {
    const double t = t0 + (t1 - t0) * static_cast<double>(i) / n_gaps;
    times.push_back(t);
    values.push_back(reference_solution(t));
  }
  return modelfit::TimeSeries::create(std::move(times), std::move(values), 1);
}

/// Data generated by the forward-Euler map of x' = a1 x^2 + a2 x from the
/// closed-form value at t0. On such data the difference quotients equal the
/// right-hand side exactly, so the objective at (a1, a2) is rounding-level.
inline modelfit::TimeSeries euler_reference(double t0, double dt, int n_gaps,
                                            double a1 = 1.0, double a2 = 2.0) {
  std::vector<double> times, values;
  double x = reference_solution(t0);
  for (int i = 0; i <= n_gaps; ++i) {
    times.push_back(t0 + dt * i);
    values.push_back(x);
    x = x + (a1 * x * x + a2 * x) * dt;
  }
  return modelfit::TimeSeries::create(std::move(times), std::move(values), 1);
}

/// Heat-kernel field u(x,t) = (4 pi c t)^{-1/2} exp(-x^2 / (4 c t)), a
/// solution of u_t = c u_xx.
inline modelfit::GridField heat_kernel_grid(double c, double lo, double hi, int n_gaps) {
  std::vector<double> xs, ts;
  for (int i = 0; i <= n_gaps; ++i) {
    xs.push_back(lo + (hi - lo) * static_cast<double>(i) / n_gaps);
    ts.push_back(lo + (hi - lo) * static_cast<double>(i) / n_gaps);
  }
  std::vector<double> u;
  u.reserve(xs.size() * ts.size());
  for (double x : xs)
    for (double t : ts)
      u.push_back(1.0 / std::sqrt(4.0 * M_PI * c * t) * std::exp(-x * x / (4.0 * c * t)));
  return modelfit::GridField::create(std::move(xs), std::move(ts), std::move(u));
}

/// Random expression source over the declared symbols; leaves are weighted
/// toward parameters so gradients are informative. Depth-limited, functions
/// wrapped so arguments stay tame (no bare log/sqrt of raw sums).
class RandomModelSource {
public:
  RandomModelSource(std::uint64_t seed, int param_count, int state_dim)
      : rng_(seed), param_count_(param_count), state_dim_(state_dim) {}

  std::string component(int depth = 0) {
    const double u = modelfit::uniform01(rng_);
    if (depth >= 3 || u < 0.35) return leaf();
    if (u < 0.75) {
      static const char* ops[] = {" + ", " - ", "*"};
      const int k = pick(3);
      return "(" + component(depth + 1) + ops[k] + component(depth + 1) + ")";
    }
    if (u < 0.85) return "(" + leaf() + "^" + std::to_string(1 + pick(3)) + ")";
    static const char* fns[] = {"sin", "cos", "exp"};
    return std::string(fns[pick(3)]) + "(" + component(depth + 1) + ")";
  }

  std::string leaf() {
    const double u = modelfit::uniform01(rng_);
    if (param_count_ > 0 && u < 0.5)
      return "a" + std::to_string(1 + pick(param_count_));
    if (state_dim_ > 0 && u < 0.8)
      return "x" + std::to_string(1 + pick(state_dim_));
    if (u < 0.9) return "t";
    return number();
  }

  std::string number() {
    const double v = std::round(100.0 * (2.0 * modelfit::uniform01(rng_) - 1.0)) / 100.0;
    return modelfit::format_double(std::abs(v) < 0.01 ? 0.5 : std::abs(v));
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * modelfit::uniform01(rng_); }

private:
  std::mt19937_64 rng_;
  int param_count_;
  int state_dim_;

  int pick(int n) { return static_cast<int>(modelfit::uniform01(rng_) * n) % n; }
};

/// Central finite-difference gradient of a scalar function, step scaled per
/// coordinate as 1e-6 * (1 + |a_k|).
template <typename F>
std::vector<double> fd_gradient(F&& f, std::vector<double> a) {
  std::vector<double> g(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double h = 1e-6 * (1.0 + std::abs(a[k]));
    const double keep = a[k];
    a[k] = keep + h;
    const double fp = f(a);
    a[k] = keep - h;
    const double fm = f(a);
    a[k] = keep;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

} // namespace testutil

#endif // MODELFIT_TESTS_HELPERS_HPP
