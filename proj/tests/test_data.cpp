#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "modelfit/data.hpp"

using namespace modelfit;
using Catch::Approx;

TEST_CASE("load_time_series parses a simple file", "[data]") {
  const TimeSeries ts = load_time_series(std::string("t,x1\n0,1\n0.5,2\n1,4\n"));
  CHECK(ts.sample_count() == 3);
  CHECK(ts.dim == 1);
  CHECK(ts.times[1] == 0.5);
  CHECK(ts.state(2)[0] == 4.0);
}

TEST_CASE("load_time_series rejects bad input", "[data]") {
  CHECK_THROWS_AS(load_time_series(std::string("t,x1\n1,1\n1,2\n")), ValidationError);
  CHECK_THROWS_AS(load_time_series(std::string("t,x1\n2,1\n1,2\n")), ValidationError);
  CHECK_THROWS_AS(load_time_series(std::string("t,x1\n0,abc\n1,2\n")), ValidationError);
  CHECK_THROWS_AS(load_time_series(std::string("t,x1\n0,1,9\n1,2\n")), ValidationError);
  CHECK_THROWS_AS(load_time_series(std::string("t,x1\n0,1\n")), ValidationError);
  CHECK_THROWS_AS(load_time_series(std::string("time,x1\n0,1\n1,2\n")), ValidationError);
  CHECK_THROWS_AS(load_time_series(std::string("t,y\n0,1\n1,2\n")), ValidationError);
  CHECK_THROWS_AS(load_time_series(std::string("t,x1\n0,inf\n1,2\n")), ValidationError);
  CHECK_THROWS_AS(load_time_series(std::string("")), ValidationError);
}

TEST_CASE("sampling the reference solution at dt=1/10 gives 11 rows", "[data]") {
  const TimeSeries ts = testutil::sample_reference(1.0, 2.0, 10);
  std::ostringstream out;
  save_time_series(ts, out);
  const TimeSeries back = load_time_series(out.str());
  CHECK(back.sample_count() == 11);
  CHECK(back.dim == 1);
  const SeriesStats st = series_stats(back);
  CHECK(st.min_gap == Approx(0.1).epsilon(1e-12));
  CHECK(st.max_gap == Approx(0.1).epsilon(1e-12));
}

TEST_CASE("series_stats on the worked examples", "[data]") {
  {
    const TimeSeries ts = TimeSeries::create({0.0, 0.1, 0.3}, {0.0, 0.0, 0.0}, 1);
    const SeriesStats st = series_stats(ts);
    CHECK(st.min_gap == Approx(0.1));
    CHECK(st.max_gap == Approx(0.2));
    CHECK(st.max_slope == 0.0);
    CHECK(st.t_first == 0.0);
    CHECK(st.t_last == 0.3);
  }
  {
    const TimeSeries ts = TimeSeries::create({0.0, 1.0, 2.0}, {0.0, 1.0, 3.0}, 1);
    const SeriesStats st = series_stats(ts);
    CHECK(st.min_gap == 1.0);
    CHECK(st.max_gap == 1.0);
    CHECK(st.max_slope == 2.0);
  }
}

TEST_CASE("series_stats bounds every gap and slope", "[data]") {
  std::mt19937_64 rng(99);
  std::vector<double> times{0.0};
  std::vector<double> values;
  for (int i = 0; i < 40; ++i) times.push_back(times.back() + 0.01 + uniform01(rng));
  for (std::size_t i = 0; i < times.size() * 2; ++i) values.push_back(2.0 * uniform01(rng) - 1.0);
  const TimeSeries ts = TimeSeries::create(times, values, 2);
  const SeriesStats st = series_stats(ts);
  for (int i = 0; i + 1 < ts.sample_count(); ++i) {
    const double gap = ts.times[i + 1] - ts.times[i];
    CHECK(st.min_gap <= gap);
    CHECK(gap <= st.max_gap);
    CHECK(st.max_slope * gap >= dist2(ts.state(i + 1), ts.state(i)) - 1e-12);
  }
}

TEST_CASE("perturb_series shifts both ways", "[data]") {
  const TimeSeries ts = TimeSeries::create({0.0, 1.0}, {1.0, 2.0}, 1);
  const NoisePair zero = perturb_series(ts, 0.0);
  CHECK(zero.lower.values == ts.values);
  CHECK(zero.upper.values == ts.values);

  const NoisePair pair = perturb_series(ts, 0.5);
  CHECK(pair.lower.values == std::vector<double>{0.5, 1.5});
  CHECK(pair.upper.values == std::vector<double>{1.5, 2.5});
  CHECK(pair.epsilon == 0.5);
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    CHECK(pair.lower.values[i] <= ts.values[i]);
    CHECK(ts.values[i] <= pair.upper.values[i]);
    CHECK(pair.upper.values[i] - pair.lower.values[i] == Approx(1.0));
  }
  CHECK_THROWS_AS(perturb_series(ts, -0.1), ValidationError);
}

TEST_CASE("time series CSV round-trip is bit-exact", "[data]") {
  std::mt19937_64 rng(4242);
  std::vector<double> times{-3.5};
  std::vector<double> values;
  for (int i = 0; i < 25; ++i) times.push_back(times.back() + 1e-6 + uniform01(rng));
  for (std::size_t i = 0; i < times.size() * 3; ++i) {
    const int mag = static_cast<int>(uniform01(rng) * 40) - 20;
    values.push_back((2.0 * uniform01(rng) - 1.0) * std::pow(10.0, mag));
  }
  const TimeSeries ts = TimeSeries::create(times, values, 3);
  std::ostringstream out;
  save_time_series(ts, out);
  const TimeSeries back = load_time_series(out.str());
  REQUIRE(back.sample_count() == ts.sample_count());
  CHECK(std::memcmp(back.times.data(), ts.times.data(), ts.times.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(back.values.data(), ts.values.data(), ts.values.size() * sizeof(double)) == 0);
}

TEST_CASE("load_grid accepts full rectangles in any row order", "[data]") {
  const GridField zeros = load_grid(std::string(
      "x,t,u\n0,0,0\n0,1,0\n0,2,0\n1,0,0\n1,1,0\n1,2,0\n2,0,0\n2,1,0\n2,2,0\n"));
  CHECK(zeros.nx() == 3);
  CHECK(zeros.nt() == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(zeros.at(i, j) == 0.0);

  const GridField shuffled = load_grid(std::string(
      "x,t,u\n2,2,8\n0,0,0\n1,1,4\n0,1,1\n2,0,6\n1,0,3\n0,2,2\n2,1,7\n1,2,5\n"));
  CHECK(shuffled.at(0, 0) == 0.0);
  CHECK(shuffled.at(2, 2) == 8.0);
  CHECK(shuffled.at(1, 2) == 5.0);
}

TEST_CASE("load_grid rejects incomplete or duplicate grids", "[data]") {
  CHECK_THROWS_AS(load_grid(std::string(
                      "x,t,u\n0,0,0\n0,1,0\n0,2,0\n1,0,0\n1,1,0\n1,2,0\n2,0,0\n2,1,0\n")),
                  ValidationError); // missing (2,2)
  CHECK_THROWS_AS(load_grid(std::string("x,t,u\n0,0,0\n0,0,1\n")), ValidationError);
  CHECK_THROWS_AS(load_grid(std::string("x,t,u\n0,0,0\n0,1,0\n1,0,0\n1,1,0\n")),
                  ValidationError); // 2x2 is below the 3-point minimum
  CHECK_THROWS_AS(load_grid(std::string("a,b,c\n0,0,0\n")), ValidationError);
}

TEST_CASE("heat-kernel grid has the documented shape", "[data]") {
  const GridField g = testutil::heat_kernel_grid(7.0, 2.0, 3.0, 40);
  CHECK(g.nx() == 41);
  CHECK(g.nt() == 41);
  std::ostringstream out;
  save_grid(g, out);
  const GridField back = load_grid(out.str());
  CHECK(back.nx() == 41);
  CHECK(back.nt() == 41);
  CHECK(std::memcmp(back.u.data(), g.u.data(), g.u.size() * sizeof(double)) == 0);
}
