#ifndef MODELFIT_OBJECTIVE_HPP
#define MODELFIT_OBJECTIVE_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modelfit/data.hpp"
#include "modelfit/errors.hpp"
#include "modelfit/expr.hpp"

namespace modelfit {

/// Projection applied by the descent driver after every step. `none` leaves
/// iterates free, `unit_norm` renormalizes to the unit sphere, `pin` holds
/// one coordinate at a fixed value.
struct ConstraintMode {
  enum class Kind { none, unit_norm, pin };
  Kind kind = Kind::none;
  int pin_index = -1; // 0-based
  double pin_value = 0.0;

  static ConstraintMode none() { return {}; }
  static ConstraintMode unit_norm() { return {Kind::unit_norm, -1, 0.0}; }
  static ConstraintMode pin(int index, double value) {
    return {Kind::pin, index, value};
  }

  void validate(int dim) const {
    if (kind == Kind::pin && (pin_index < 0 || pin_index >= dim))
      throw ValidationError("pin index " + std::to_string(pin_index + 1) +
                            " outside parameter dimension " + std::to_string(dim));
  }
};

/// A nonnegative sum-of-squares objective with its exact gradient.
/// eval_grad returns F(a) and writes dF/da into `grad` (size dim).
/// Evaluation is pure; copies of an Objective may run concurrently.
struct Objective {
  int dim = 0;
  std::function<double(std::span<const double>, std::span<double>)> eval_grad;

  std::pair<double, std::vector<double>> evaluate(std::span<const double> a) const {
    std::vector<double> grad(static_cast<std::size_t>(dim));
    const double f = eval_grad(a, grad);
    return {f, std::move(grad)};
  }
};

/// F(a) = sum_i ||f(a, t_i) - x(t_i)||^2 over every sample. The model is a
/// function of (a, t) only; state references are rejected here.
inline Objective fn_fit_objective(const ModelExpr& model, const TimeSeries& ts) {
  if (model.references_state())
    throw ValidationError("function-fit models may not reference state symbols x<k>; "
                          "the model is evaluated as f(a, t)");
  if (model.output_dim() != ts.dim)
    throw ValidationError("model has " + std::to_string(model.output_dim()) +
                          " components, data has dimension " + std::to_string(ts.dim));
  struct Data {
    ModelExpr model;
    TimeSeries ts;
  };
  auto data = std::make_shared<Data>(Data{model, ts});
  const int p = model.param_count();
  const int d = ts.dim;
  Objective obj;
  obj.dim = p;
  obj.eval_grad = [data, p, d](std::span<const double> a, std::span<double> grad) {
    EvalScratch scratch;
    std::vector<double> state(static_cast<std::size_t>(data->model.state_dim()), 0.0);
    std::vector<double> value(static_cast<std::size_t>(d));
    std::vector<double> jac(static_cast<std::size_t>(d) * static_cast<std::size_t>(p));
    double f = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < data->ts.sample_count(); ++i) {
      data->model.eval_jacobian(a, data->ts.times[static_cast<std::size_t>(i)], state,
                                DiffMode::params, value, jac, scratch);
      const auto x = data->ts.state(i);
      for (int c = 0; c < d; ++c) {
        const double r = value[static_cast<std::size_t>(c)] - x[static_cast<std::size_t>(c)];
        f += r * r;
        const double* row = jac.data() + static_cast<std::size_t>(c) * p;
        for (int k = 0; k < p; ++k) grad[static_cast<std::size_t>(k)] += 2.0 * r * row[k];
      }
    }
    return f;
  };
  return obj;
}

/// F(a) = sum_i ||f(a, t_i, x(t_i)) - [x(t_{i+1})-x(t_i)]/(t_{i+1}-t_i)||^2
/// over the n forward differences.
inline Objective ode_objective(const ModelExpr& model, const TimeSeries& ts) {
  if (model.state_dim() != ts.dim)
    throw ValidationError("model state dimension " + std::to_string(model.state_dim()) +
                          " does not match data dimension " + std::to_string(ts.dim));
  if (model.output_dim() != ts.dim)
    throw ValidationError("ODE right-hand side needs " + std::to_string(ts.dim) +
                          " components, model has " + std::to_string(model.output_dim()));
  struct Data {
    ModelExpr model;
    TimeSeries ts;
    std::vector<double> quotients; // row-major (n-1) x dim
  };
  auto data = std::make_shared<Data>(Data{model, ts, {}});
  const int n = ts.sample_count() - 1;
  const int d = ts.dim;
  data->quotients.resize(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    const double dt = ts.times[static_cast<std::size_t>(i) + 1] - ts.times[static_cast<std::size_t>(i)];
    const auto x0 = ts.state(i);
    const auto x1 = ts.state(i + 1);
    for (int c = 0; c < d; ++c)
      data->quotients[static_cast<std::size_t>(i) * d + c] =
          (x1[static_cast<std::size_t>(c)] - x0[static_cast<std::size_t>(c)]) / dt;
  }
  const int p = model.param_count();
  Objective obj;
  obj.dim = p;
  obj.eval_grad = [data, n, d, p](std::span<const double> a, std::span<double> grad) {
    EvalScratch scratch;
    std::vector<double> value(static_cast<std::size_t>(d));
    std::vector<double> jac(static_cast<std::size_t>(d) * static_cast<std::size_t>(p));
    double f = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      data->model.eval_jacobian(a, data->ts.times[static_cast<std::size_t>(i)],
                                data->ts.state(i), DiffMode::params, value, jac, scratch);
      for (int c = 0; c < d; ++c) {
        const double r = value[static_cast<std::size_t>(c)] -
                         data->quotients[static_cast<std::size_t>(i) * d + c];
        f += r * r;
        const double* row = jac.data() + static_cast<std::size_t>(c) * p;
        for (int k = 0; k < p; ++k) grad[static_cast<std::size_t>(k)] += 2.0 * r * row[k];
      }
    }
    return f;
  };
  return obj;
}

enum class GridVar { space, time };

/// Difference quotients on the grid. First order is the backward quotient
/// anchored at (i, j); second order is the three-point form centered at
/// (i, j) with the mixed denominator (h_right * h_left), exact for
/// quadratics on uniform grids.
inline double approx_partial(const GridField& g, GridVar var, int order, int i, int j) {
  const int ni = g.nx(), nj = g.nt();
  if (i < 0 || i >= ni || j < 0 || j >= nj)
    throw ValidationError("grid index out of range");
  if (order != 1 && order != 2)
    throw ValidationError("derivative order must be 1 or 2");
  if (var == GridVar::space) {
    if (order == 1) {
      if (i < 1) throw ValidationError("first-order x stencil needs i >= 1");
      return (g.at(i, j) - g.at(i - 1, j)) / (g.xs[static_cast<std::size_t>(i)] - g.xs[static_cast<std::size_t>(i) - 1]);
    }
    if (i < 1 || i > ni - 2) throw ValidationError("second-order x stencil needs interior i");
    const double hr = g.xs[static_cast<std::size_t>(i) + 1] - g.xs[static_cast<std::size_t>(i)];
    const double hl = g.xs[static_cast<std::size_t>(i)] - g.xs[static_cast<std::size_t>(i) - 1];
    return (g.at(i + 1, j) - 2.0 * g.at(i, j) + g.at(i - 1, j)) / (hr * hl);
  }
  if (order == 1) {
    if (j < 1) throw ValidationError("first-order t stencil needs j >= 1");
    return (g.at(i, j) - g.at(i, j - 1)) / (g.ts[static_cast<std::size_t>(j)] - g.ts[static_cast<std::size_t>(j) - 1]);
  }
  if (j < 1 || j > nj - 2) throw ValidationError("second-order t stencil needs interior j");
  const double hr = g.ts[static_cast<std::size_t>(j) + 1] - g.ts[static_cast<std::size_t>(j)];
  const double hl = g.ts[static_cast<std::size_t>(j)] - g.ts[static_cast<std::size_t>(j) - 1];
  return (g.at(i, j + 1) - 2.0 * g.at(i, j) + g.at(i, j - 1)) / (hr * hl);
}

/// One term a_k * D u of the conjectured constant-coefficient PDE.
struct PdeTerm {
  int coeff_index = 1; // 1-based, coefficient a_k
  GridVar var = GridVar::space;
  int order = 1;
};

/// Residual at anchor (I, J): first-order stencils are anchored backward at
/// the node itself; second-order stencils are centered one step behind the
/// anchor in their own variable, so each residual reads only values at
/// indices <= I in x and <= J in t. The sum runs over every anchor where all
/// requested stencils are in range. With include_constant an extra trailing
/// coefficient plays the role of the constant c.
///
/// F is quadratic in a, so the Gram matrix of the stencil vectors is
/// precomputed and F(a) = a^T G a with exact gradient 2 G a. Note a = 0 is
/// the trivial global minimum; `constraint` is validated here and enforced
/// by the descent driver.
inline Objective pde_objective(std::span<const PdeTerm> terms, const GridField& grid,
                               const ConstraintMode& constraint, bool include_constant) {
  if (terms.empty()) throw ValidationError("PDE term list is empty");
  int max_coeff = 0;
  int need_i = 0, need_j = 0;
  for (const PdeTerm& term : terms) {
    if (term.coeff_index < 1) throw ValidationError("coefficient indices are 1-based");
    if (term.order != 1 && term.order != 2)
      throw ValidationError("PDE terms support derivative orders 1 and 2 only");
    max_coeff = std::max(max_coeff, term.coeff_index);
    (term.var == GridVar::space ? need_i : need_j) =
        std::max(term.var == GridVar::space ? need_i : need_j, term.order);
  }
  if (need_i > grid.nx() - 1 || need_j > grid.nt() - 1)
    throw ValidationError("grid too small for requested derivative orders");
  const int dim = max_coeff + (include_constant ? 1 : 0);
  constraint.validate(dim);

  // Gram matrix of per-anchor stencil vectors, fixed accumulation order.
  std::vector<double> gram(static_cast<std::size_t>(dim) * dim, 0.0);
  std::vector<double> s(static_cast<std::size_t>(dim));
  for (int J = need_j; J < grid.nt(); ++J) {
    for (int I = need_i; I < grid.nx(); ++I) {
      std::fill(s.begin(), s.end(), 0.0);
      for (const PdeTerm& term : terms) {
        double v = 0.0;
        if (term.order == 1) {
          v = approx_partial(grid, term.var, 1, I, J);
        } else if (term.var == GridVar::space) {
          v = approx_partial(grid, GridVar::space, 2, I - 1, J);
        } else {
          v = approx_partial(grid, GridVar::time, 2, I, J - 1);
        }
        s[static_cast<std::size_t>(term.coeff_index) - 1] += v;
      }
      if (include_constant) s[static_cast<std::size_t>(dim) - 1] = 1.0;
      for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c)
          gram[static_cast<std::size_t>(r) * dim + c] +=
              s[static_cast<std::size_t>(r)] * s[static_cast<std::size_t>(c)];
    }
  }

  auto gram_ptr = std::make_shared<std::vector<double>>(std::move(gram));
  Objective obj;
  obj.dim = dim;
  obj.eval_grad = [gram_ptr, dim](std::span<const double> a, std::span<double> grad) {
    const std::vector<double>& G = *gram_ptr;
    double f = 0.0;
    for (int r = 0; r < dim; ++r) {
      double row = 0.0;
      for (int c = 0; c < dim; ++c)
        row += G[static_cast<std::size_t>(r) * dim + c] * a[static_cast<std::size_t>(c)];
      grad[static_cast<std::size_t>(r)] = 2.0 * row;
      f += a[static_cast<std::size_t>(r)] * row;
    }
    return f;
  };
  return obj;
}

} // namespace modelfit

#endif // MODELFIT_OBJECTIVE_HPP
