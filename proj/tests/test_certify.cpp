#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "modelfit/certify.hpp"
#include "modelfit/integrate.hpp"

using namespace modelfit;
using Catch::Approx;

namespace {

SeriesStats make_stats(double gap, double slope, double t0, double t1) {
  SeriesStats st;
  st.min_gap = gap;
  st.max_gap = gap;
  st.max_slope = slope;
  st.t_first = t0;
  st.t_last = t1;
  return st;
}

} // namespace

TEST_CASE("lipschitz estimate of a linear model", "[certify]") {
  const ModelExpr m = parse_model("a1*x1", 1, 1);
  const TimeSeries ts = TimeSeries::create({0.0, 0.5, 1.0}, {1.0, 2.0, 3.0}, 1);
  const LipschitzEstimate est = estimate_lipschitz(m, std::vector<double>{2.0}, ts);
  CHECK(est.value == Approx(2.2).epsilon(1e-9)); // 1.1 * |a1|, flat over the box
  CHECK(est.samples == 10000);
  CHECK(est.method.find("halton") != std::string::npos);

  const ModelExpr c = parse_model("a1", 1, 1);
  const LipschitzEstimate zero = estimate_lipschitz(c, std::vector<double>{5.0}, ts);
  CHECK(zero.value == 0.0);
}

TEST_CASE("lipschitz estimate agrees with a dense scan", "[certify]") {
  const ModelExpr m = parse_model("a1*x1^2 + a2*x1", 2, 1);
  const TimeSeries ts = testutil::sample_reference(1.0, 2.0, 10);
  const std::vector<double> a = {1.0, 2.0};
  const LipschitzEstimate est = estimate_lipschitz(m, a, ts);

  // oracle: exhaustive scan of |2 a1 x + a2| over the same inflated box
  double xlo = ts.values[0], xhi = ts.values[0];
  for (double v : ts.values) {
    xlo = std::min(xlo, v);
    xhi = std::max(xhi, v);
  }
  const double w = xhi - xlo;
  xlo -= 0.05 * w;
  xhi += 0.05 * w;
  double scan = 0.0;
  for (int k = 0; k <= 1000000; ++k) {
    const double x = xlo + (xhi - xlo) * k / 1000000.0;
    scan = std::max(scan, std::abs(2.0 * a[0] * x + a[1]));
  }
  CHECK(est.value == Approx(1.1 * scan).epsilon(0.02));
  CHECK(est.value >= scan); // safety factor keeps it a genuine upper bound
}

TEST_CASE("lipschitz estimate fails on data straddling the singularity", "[certify]") {
  const TimeSeries ts = testutil::sample_reference(0.0, 1.0, 1000);
  const ModelExpr m = parse_model("a1*x1^2 + a2*x1", 2, 1);
  CHECK_THROWS_AS(estimate_lipschitz(m, std::vector<double>{1.0, 2.0}, ts), NumericError);
}

TEST_CASE("lipschitz estimate reports non-finite samples", "[certify]") {
  const ModelExpr lg = parse_model("log(x1)", 0, 1);
  const TimeSeries ts = TimeSeries::create({0.0, 1.0, 2.0}, {-1.0, 1.0, 2.0}, 1);
  CHECK_THROWS_AS(estimate_lipschitz(lg, {}, ts), NumericError);
}

TEST_CASE("certificate bound at worked values", "[certify]") {
  // m = 0: the bound starts at zero
  const ErrorCertificate zero =
      error_certificate(0.0, make_stats(0.1, 2.0, 0.0, 1.0), LipschitzEstimate::external(3.0));
  CHECK(zero.eval(0.0) == 0.0);
  CHECK(zero.eval(0.5) > 0.0);

  // m = 0 and L = 0: identically zero
  const ErrorCertificate flat =
      error_certificate(0.0, make_stats(0.1, 0.0, 0.0, 1.0), LipschitzEstimate::external(0.0));
  for (double t : {0.0, 0.3, 1.0}) CHECK(flat.eval(t) == 0.0);

  // frozen value, cross-checked externally:
  // 0.1 * (1e-6 + sqrt(1 + (1e-6 + 2)^2) * (e^3 - 1)) = 4.267657601795384
  const ErrorCertificate cert = error_certificate(
      1e-12, make_stats(0.1, 2.0, 0.0, 1.0), LipschitzEstimate::external(6.0));
  CHECK(cert.eval(0.5) == Approx(4.267657601795384).epsilon(1e-12));
  CHECK(cert.rhs_bound == Approx(1e-6 + 2.0));
  CHECK(cert.segment_deviation_bound ==
        Approx(6.0 * 0.1 * std::sqrt(1.0 + cert.rhs_bound * cert.rhs_bound)));
}

TEST_CASE("certificate refuses unrepresentable bounds", "[certify]") {
  CHECK_THROWS_AS(error_certificate(1.0, make_stats(0.1, 2.0, 0.0, 1.0),
                                    LipschitzEstimate::external(800.0)),
                  NumericError);
  CHECK_THROWS_AS(error_certificate(-1.0, make_stats(0.1, 2.0, 0.0, 1.0),
                                    LipschitzEstimate::external(1.0)),
                  ValidationError);
}

TEST_CASE("certificate bound is monotone", "[certify]") {
  const SeriesStats st = make_stats(0.2, 1.5, 0.0, 2.0);
  const ErrorCertificate cert =
      error_certificate(1e-4, st, LipschitzEstimate::external(2.0));
  double prev = cert.eval(0.0);
  for (int k = 1; k <= 50; ++k) {
    const double cur = cert.eval(2.0 * k / 50.0);
    CHECK(cur > prev);
    prev = cur;
  }

  // non-decreasing in each constant
  const double base = cert.eval(1.0);
  CHECK(error_certificate(2e-4, st, LipschitzEstimate::external(2.0)).eval(1.0) >= base);
  CHECK(error_certificate(1e-4, make_stats(0.3, 1.5, 0.0, 2.0), LipschitzEstimate::external(2.0))
            .eval(1.0) >= base);
  CHECK(error_certificate(1e-4, make_stats(0.2, 2.5, 0.0, 2.0), LipschitzEstimate::external(2.0))
            .eval(1.0) >= base);
  CHECK(error_certificate(1e-4, st, LipschitzEstimate::external(2.5)).eval(1.0) >= base);
}

TEST_CASE("build_certificate records the direct right-hand-side maximum", "[certify]") {
  const TimeSeries ts = testutil::euler_reference(1.0, 0.1, 10);
  const ModelExpr m = parse_model("a1*x1^2 + a2*x1", 2, 1);
  const ErrorCertificate cert = build_certificate(m, std::vector<double>{1.0, 2.0}, ts);
  CHECK(std::isfinite(cert.direct_rhs_max));
  CHECK(cert.direct_rhs_max > 0.0);
  // data-only estimate dominates the direct maximum: F <= sqrt(m) + Delta
  CHECK(cert.direct_rhs_max <= cert.rhs_bound * (1.0 + 1e-12));
}

TEST_CASE("comparison bound is assembled from the two certificates", "[certify]") {
  const SeriesStats st = make_stats(0.1, 2.0, 1.0, 2.0);
  const ErrorCertificate cf = error_certificate(1e-8, st, LipschitzEstimate::external(3.0));
  const ErrorCertificate ch = error_certificate(4e-8, st, LipschitzEstimate::external(2.0));
  const ComparisonBound cmp = compare_models(cf, ch);
  for (double t : {1.0, 1.25, 1.8, 2.0})
    CHECK(cmp.eval(t) == cf.eval(t) + ch.eval(t)); // exact assembly

  // identical certificates double the single-model terms
  const ComparisonBound twice = compare_models(cf, cf);
  for (double t : {1.0, 1.5, 2.0}) CHECK(twice.eval(t) == Approx(2.0 * cf.eval(t)));

  // at the origin only the sqrt(m) terms survive
  CHECK(cmp.eval(1.0) == Approx((std::sqrt(1e-8) + std::sqrt(4e-8)) * 0.1).epsilon(1e-12));

  const SeriesStats other = make_stats(0.1, 2.5, 1.0, 2.0);
  const ErrorCertificate mismatched =
      error_certificate(1e-8, other, LipschitzEstimate::external(3.0));
  CHECK_THROWS_AS(compare_models(cf, mismatched), ValidationError);
}

TEST_CASE("capped comparison bound validates its premises", "[certify]") {
  const SeriesStats st = make_stats(0.1, 2.0, 0.0, 1.0);
  const ErrorCertificate cf = error_certificate(1e-8, st, LipschitzEstimate::external(3.0));
  const ErrorCertificate ch = error_certificate(4e-8, st, LipschitzEstimate::external(2.0));
  const CappedComparisonBound cap = compare_models_capped(cf, ch, 1e-3, 4.0);
  const double expect =
      2.0 * 0.1 *
      (1e-3 + std::sqrt(1.0 + (1e-3 + 2.0) * (1e-3 + 2.0)) * std::expm1(4.0 * 0.5));
  CHECK(cap.eval(0.5) == Approx(expect).epsilon(1e-12));
  // the cap dominates both individual certificates
  for (double t : {0.0, 0.25, 0.75, 1.0}) CHECK(cap.eval(t) >= compare_models(cf, ch).eval(t));

  CHECK_THROWS_AS(compare_models_capped(cf, ch, 1e-5, 4.0), ValidationError);
  CHECK_THROWS_AS(compare_models_capped(cf, ch, 1e-3, 2.5), ValidationError);
}

TEST_CASE("certificate bound covers the actual polygon-solution gap", "[certify]") {
  // a tame linear system fitted from closed-form data
  std::vector<double> times, values;
  const double lam = 1.3;
  for (int i = 0; i <= 20; ++i) {
    const double t = 0.05 * i;
    times.push_back(t);
    values.push_back(0.7 * std::exp(lam * t));
  }
  const TimeSeries ts = TimeSeries::create(times, values, 1);
  const ModelExpr m = parse_model("a1*x1", 1, 1);
  const FitResult fit =
      steepest_descent(ode_objective(m, ts), std::vector<double>{0.5}, DescentOptions{});
  const ErrorCertificate cert = build_certificate(m, fit.params, ts);

  const PiecewiseTrajectory P = polygon_interpolant(ts);
  const Trajectory y = rk4_solve(m, fit.params, ts.times.front(), ts.state(0),
                                 ts.times.back(), 1e-3);
  REQUIRE_FALSE(y.truncated);
  for (int k = 0; k <= 200; ++k) {
    const double t = ts.times.front() + (ts.times.back() - ts.times.front()) * k / 200.0;
    const double gap = std::abs(P.eval(t)[0] - y.eval(t)[0]);
    CHECK(gap <= cert.eval(t) + 1e-8);
  }
}

TEST_CASE("noise analysis with zero epsilon collapses to the center fit", "[certify]") {
  const TimeSeries ts = testutil::euler_reference(1.0, 0.1, 10);
  const ModelExpr m = parse_model("a1*x1^2 + a2*x1", 2, 1);
  const NoiseEnvelope env =
      noise_analysis(m, ts, 0.0, std::vector<double>{0.5, 0.5}, DescentOptions{});
  CHECK(env.lower_fit.params == env.center_fit.params);
  CHECK(env.upper_fit.params == env.center_fit.params);
  CHECK(env.lower_refit_distance == 0.0);
  CHECK(env.upper_refit_distance == 0.0);
  for (double t : {1.0, 1.5, 2.0})
    CHECK(env.eval(t) == Approx(4.0 * env.center.eval(t)).margin(1e-300));
  CHECK_THROWS_AS(noise_analysis(m, ts, -0.1, std::vector<double>{0.5, 0.5}, DescentOptions{}),
                  ValidationError);
}

TEST_CASE("noise envelope dominates the spread of the refit solutions", "[certify]") {
  const TimeSeries ts = testutil::euler_reference(1.0, 0.1, 10);
  const ModelExpr m = parse_model("a1*x1^2 + a2*x1", 2, 1);
  const NoiseEnvelope env =
      noise_analysis(m, ts, 0.01, std::vector<double>{0.5, 0.5}, DescentOptions{});
  CHECK(env.epsilon == 0.01);
  CHECK(env.lower_refit_distance < 1.0); // refits stayed near the center optimum
  CHECK(env.upper_refit_distance < 1.0);

  const NoisePair pair = perturb_series(ts, 0.01);
  const Trajectory y_up = rk4_solve(m, env.upper_fit.params, ts.times.front(),
                                    pair.upper.state(0), ts.times.back(), 1e-3);
  const Trajectory y_lo = rk4_solve(m, env.lower_fit.params, ts.times.front(),
                                    pair.lower.state(0), ts.times.back(), 1e-3);
  for (int k = 0; k <= 300; ++k) {
    const double t = ts.times.front() + (ts.times.back() - ts.times.front()) * k / 300.0;
    const double spread = std::abs(y_up.eval(t)[0] - y_lo.eval(t)[0]);
    CHECK(spread <= env.eval(t) + 1e-10);
    CHECK(env.eval(t) >= 2.0 * env.epsilon);
  }
}
