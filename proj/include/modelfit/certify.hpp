#ifndef MODELFIT_CERTIFY_HPP
#define MODELFIT_CERTIFY_HPP

#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "modelfit/data.hpp"
#include "modelfit/descent.hpp"
#include "modelfit/errors.hpp"
#include "modelfit/expr.hpp"
#include "modelfit/objective.hpp"
#include "modelfit/util.hpp"

namespace modelfit {

/// Sampled Lipschitz estimate for f over the data's bounding box; the
/// method fields travel with every certificate built from it.
struct LipschitzEstimate {
  double value = 0.0;
  std::string method;
  int samples = 0;
  double inflation = 0.0; // fraction of each axis width added in total
  double safety = 0.0;    // multiplier applied to the sampled maximum

  static LipschitzEstimate external(double value) {
    return {value, "external", 0, 0.0, 1.0};
  }
};

namespace certify_detail {

inline double log_max_double() {
  return std::log(std::numeric_limits<double>::max()); // ~709.78
}

/// Frobenius norm of the (t,x)-Jacobian; an upper bound on the spectral
/// norm, so safe for certificates.
inline double jacobian_norm(const ModelExpr& model, std::span<const double> a, double t,
                            std::span<const double> x, EvalScratch& scratch,
                            std::vector<double>& value, std::vector<double>& jac) {
  model.eval_jacobian(a, t, x, DiffMode::inputs, value, jac, scratch);
  if (!all_finite(value)) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : jac) s += v * v;
  return std::sqrt(s);
}

} // namespace certify_detail

/// Estimates a Lipschitz constant for f(a, t, x) over the bounding box of
/// the samples {(t_i, x(t_i))}, each axis inflated by 10% of its width, as
/// 1.1x the largest (t,x)-Jacobian norm over 10^4 Halton points.
///
/// Fails when a sampled Jacobian is non-finite, or when the estimate is too
/// large to certify anything on this data: if exp(L * (t_last - t_first))
/// overflows, every downstream bound would be infinite, which signals
/// unbounded dynamics inside the sampled window.
inline LipschitzEstimate estimate_lipschitz(const ModelExpr& model, std::span<const double> a,
                                            const TimeSeries& ts) {
  if (model.state_dim() != ts.dim)
    throw ValidationError("model state dimension does not match the series");
  constexpr int kSamples = 10000;
  constexpr double kInflation = 0.10;
  constexpr double kSafety = 1.1;

  const int d = ts.dim;
  std::vector<double> lo(static_cast<std::size_t>(d) + 1, std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<std::size_t>(d) + 1, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < ts.sample_count(); ++i) {
    lo[0] = std::min(lo[0], ts.times[static_cast<std::size_t>(i)]);
    hi[0] = std::max(hi[0], ts.times[static_cast<std::size_t>(i)]);
    const auto x = ts.state(i);
    for (int c = 0; c < d; ++c) {
      lo[static_cast<std::size_t>(c) + 1] = std::min(lo[static_cast<std::size_t>(c) + 1], x[static_cast<std::size_t>(c)]);
      hi[static_cast<std::size_t>(c) + 1] = std::max(hi[static_cast<std::size_t>(c) + 1], x[static_cast<std::size_t>(c)]);
    }
  }
  for (std::size_t k = 0; k < lo.size(); ++k) {
    const double width = hi[k] - lo[k];
    lo[k] -= 0.5 * kInflation * width;
    hi[k] += 0.5 * kInflation * width;
  }

  EvalScratch scratch;
  std::vector<double> unit(static_cast<std::size_t>(d) + 1);
  std::vector<double> x(static_cast<std::size_t>(d));
  std::vector<double> value(static_cast<std::size_t>(model.output_dim()));
  std::vector<double> jac(value.size() * (static_cast<std::size_t>(d) + 1));
  double max_norm = 0.0;
  for (int s = 1; s <= kSamples; ++s) {
    halton_point(static_cast<std::uint64_t>(s), unit);
    const double t = lo[0] + (hi[0] - lo[0]) * unit[0];
    for (int c = 0; c < d; ++c)
      x[static_cast<std::size_t>(c)] =
          lo[static_cast<std::size_t>(c) + 1] +
          (hi[static_cast<std::size_t>(c) + 1] - lo[static_cast<std::size_t>(c) + 1]) *
              unit[static_cast<std::size_t>(c) + 1];
    const double norm = certify_detail::jacobian_norm(model, a, t, x, scratch, value, jac);
    if (!std::isfinite(norm)) {
      std::string point = "t=" + format_double(t);
      for (int c = 0; c < d; ++c)
        point += ", x" + std::to_string(c + 1) + "=" + format_double(x[static_cast<std::size_t>(c)]);
      throw NumericError("non-finite Jacobian while sampling the Lipschitz constant at (" +
                         point + "); the model is unbounded on the data's bounding box");
    }
    max_norm = std::max(max_norm, norm);
  }

  LipschitzEstimate est;
  est.value = kSafety * max_norm;
  est.samples = kSamples;
  est.inflation = kInflation;
  est.safety = kSafety;
  est.method = "halton-jacobian;samples=" + std::to_string(kSamples) +
               ";inflation=" + format_double(kInflation) + ";safety=" + format_double(kSafety);

  const double span = ts.times.back() - ts.times.front();
  if (est.value * span > certify_detail::log_max_double())
    throw NumericError("Lipschitz estimate " + format_double(est.value) +
                       " is too large to certify: exp(L * " + format_double(span) +
                       ") overflows; the dynamics look unbounded on this data");
  return est;
}

/// A-posteriori bound on ||P(t) - y(t)|| for the polygon P through the data
/// and the exact solution y of the fitted ODE started at the first datum:
///   bound(t) = max_gap * ( sqrt(m)
///              + sqrt(1 + rhs_bound^2) * (exp(L (t - t_origin)) - 1) )
/// with rhs_bound = sqrt(m) + max_slope estimated from the data alone.
///
/// The first term bounds ||P - p||: each residual obeys
/// ||f(t_i,x_i) - q_i|| <= sqrt(m), so the deviation over one interval is at
/// most sqrt(m) * max_gap. (Squaring the gap there would shrink the bound
/// below the deviation whenever max_gap < 1.)
struct ErrorCertificate {
  double max_gap = 0.0;    // largest time gap of the series
  double max_slope = 0.0;  // largest difference-quotient norm of the series
  double objective = 0.0;  // m, the achieved least-squares minimum
  LipschitzEstimate lipschitz;
  double rhs_bound = 0.0;  // sqrt(m) + max_slope, bounds max ||f(t_i, x(t_i))||
  double segment_deviation_bound = 0.0; // L * max_gap * sqrt(1 + rhs_bound^2)
  double direct_rhs_max = std::numeric_limits<double>::quiet_NaN(); // max ||f(t_i,x(t_i))|| when known
  double t_origin = 0.0;
  double t_horizon = 0.0;  // end of the data window the certificate was built on

  double eval(double t) const {
    return max_gap * (std::sqrt(objective) +
                      std::sqrt(1.0 + rhs_bound * rhs_bound) *
                          std::expm1(lipschitz.value * (t - t_origin)));
  }
};

/// Builds the certificate from the achieved minimum, the series constants,
/// and a Lipschitz estimate. Refuses (throws) when the bound is not finite
/// over the data window; an unrepresentable certificate carries no
/// information, which is exactly the near-singular situation.
inline ErrorCertificate error_certificate(double m, const SeriesStats& stats,
                                          const LipschitzEstimate& lipschitz) {
  if (!(m >= 0.0)) throw ValidationError("objective minimum must be >= 0");
  if (!(lipschitz.value >= 0.0)) throw ValidationError("Lipschitz constant must be >= 0");
  ErrorCertificate cert;
  cert.max_gap = stats.max_gap;
  cert.max_slope = stats.max_slope;
  cert.objective = m;
  cert.lipschitz = lipschitz;
  cert.rhs_bound = std::sqrt(m) + stats.max_slope;
  cert.segment_deviation_bound =
      lipschitz.value * stats.max_gap * std::sqrt(1.0 + cert.rhs_bound * cert.rhs_bound);
  cert.t_origin = stats.t_first;
  cert.t_horizon = stats.t_last;
  if (!std::isfinite(cert.eval(cert.t_horizon)) || !std::isfinite(cert.segment_deviation_bound))
    throw NumericError("certificate refused: bound is not finite over the data window "
                       "(L=" + format_double(lipschitz.value) + ", span=" +
                       format_double(stats.t_last - stats.t_first) + ")");
  return cert;
}

/// Fits nothing: certifies the given parameters on the given data. Computes
/// m = F(a) from the ODE objective, estimates L, and also records the direct
/// maximum of ||f(t_i, x(t_i))|| for comparison with the data-only estimate.
inline ErrorCertificate build_certificate(const ModelExpr& model, std::span<const double> a,
                                          const TimeSeries& ts) {
  const Objective obj = ode_objective(model, ts);
  std::vector<double> grad(static_cast<std::size_t>(obj.dim));
  const double m = obj.eval_grad(a, grad);
  if (!std::isfinite(m))
    throw NumericError("objective is non-finite at the supplied parameters");
  const LipschitzEstimate lip = estimate_lipschitz(model, a, ts);
  ErrorCertificate cert = error_certificate(m, series_stats(ts), lip);
  EvalScratch scratch;
  std::vector<double> f(static_cast<std::size_t>(ts.dim));
  double direct = 0.0;
  for (int i = 0; i < ts.sample_count(); ++i) {
    model.eval(a, ts.times[static_cast<std::size_t>(i)], ts.state(i), f, scratch);
    direct = std::max(direct, norm2(f));
  }
  cert.direct_rhs_max = direct;
  return cert;
}

/// Two-model comparison: bound on ||y(t) - z(t)|| for solutions of two
/// models fitted to the same data, assembled exactly as the sum of the two
/// single-model certificates.
struct ComparisonBound {
  ErrorCertificate first;
  ErrorCertificate second;

  double eval(double t) const { return first.eval(t) + second.eval(t); }
};

inline ComparisonBound compare_models(const ErrorCertificate& f, const ErrorCertificate& h) {
  if (f.max_gap != h.max_gap || f.max_slope != h.max_slope || f.t_origin != h.t_origin)
    throw ValidationError("comparison requires certificates built over the same series");
  return {f, h};
}

/// Uniform-cap comparison variant: valid for every pair of fits with
/// objective below delta^2 and Lipschitz constant below lipschitz_cap,
///   2 * max_gap * (delta
///     + sqrt(1 + (delta + max_slope)^2) * (exp(Lcap (t - t_origin)) - 1)).
struct CappedComparisonBound {
  double max_gap = 0.0;
  double max_slope = 0.0;
  double delta = 0.0;
  double lipschitz_cap = 0.0;
  double t_origin = 0.0;

  double eval(double t) const {
    const double rhs = delta + max_slope;
    return 2.0 * max_gap *
           (delta + std::sqrt(1.0 + rhs * rhs) * std::expm1(lipschitz_cap * (t - t_origin)));
  }
};

inline CappedComparisonBound compare_models_capped(const ErrorCertificate& f,
                                                   const ErrorCertificate& h, double delta,
                                                   double lipschitz_cap) {
  if (f.max_gap != h.max_gap || f.max_slope != h.max_slope || f.t_origin != h.t_origin)
    throw ValidationError("comparison requires certificates built over the same series");
  if (!(f.objective < delta * delta && h.objective < delta * delta))
    throw ValidationError("capped comparison requires both objectives below delta^2");
  if (!(f.lipschitz.value < lipschitz_cap && h.lipschitz.value < lipschitz_cap))
    throw ValidationError("capped comparison requires both Lipschitz constants below the cap");
  return {f.max_gap, f.max_slope, delta, lipschitz_cap, f.t_origin};
}

/// Result of the +/- epsilon measurement-noise analysis: three fits, three
/// certificates, and the envelope
///   envelope(t) = 2 (epsilon + E(t)) + E_upper(t) + E_lower(t)
/// bounding ||y_upper(t) - y_lower(t)||. The fits for the shifted series
/// start from the center optimum; the distance each refit moved is recorded
/// so callers can judge whether the fits stayed in the same watershed.
struct NoiseEnvelope {
  double epsilon = 0.0;
  FitResult center_fit, lower_fit, upper_fit;
  ErrorCertificate center, lower, upper;
  double lower_refit_distance = 0.0;
  double upper_refit_distance = 0.0;

  double eval(double t) const {
    return 2.0 * (epsilon + center.eval(t)) + upper.eval(t) + lower.eval(t);
  }
};

inline NoiseEnvelope noise_analysis(const ModelExpr& model, const TimeSeries& ts,
                                    double epsilon, std::span<const double> start,
                                    const DescentOptions& opts,
                                    const ConstraintMode& constraint = {}) {
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
  const NoisePair pair = perturb_series(ts, epsilon);

  NoiseEnvelope env;
  env.epsilon = epsilon;
  env.center_fit = steepest_descent(ode_objective(model, ts), start, opts, constraint);
  const std::span<const double> seed(env.center_fit.params);
  env.lower_fit = steepest_descent(ode_objective(model, pair.lower), seed, opts, constraint);
  env.upper_fit = steepest_descent(ode_objective(model, pair.upper), seed, opts, constraint);
  env.lower_refit_distance = dist2(env.lower_fit.params, env.center_fit.params);
  env.upper_refit_distance = dist2(env.upper_fit.params, env.center_fit.params);

  env.center = build_certificate(model, env.center_fit.params, ts);
  env.lower = build_certificate(model, env.lower_fit.params, pair.lower);
  env.upper = build_certificate(model, env.upper_fit.params, pair.upper);
  return env;
}

/// Exports a bound curve as `t,bound` rows at the given sample times.
template <typename BoundFn>
void save_bound_csv(std::span<const double> times, BoundFn&& bound, std::ostream& out) {
  out << "t,bound\n";
  for (double t : times)
    out << format_double17(t) << ',' << format_double17(bound(t)) << '\n';
}

} // namespace modelfit

#endif // MODELFIT_CERTIFY_HPP
