#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "htopt/numeric.hpp"
#include "htopt/rng.hpp"

using namespace htopt;

TEST_CASE("streams with the same seed are bit-identical", "[rng]") {
  RngStream a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(a.next_u64() == b.next_u64());
  }
  RngStream c(123), d(123);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(c.uniform01() == d.uniform01());
    REQUIRE(c.normal() == d.normal());
  }
}

TEST_CASE("derived stream seeds separate salts and values", "[rng]") {
  REQUIRE(derive_stream_seed(1, 2) != derive_stream_seed(1, 3));
  REQUIRE(derive_stream_seed(1, 2) != derive_stream_seed(2, 2));
  REQUIRE(derive_stream_seed(7, 9) == derive_stream_seed(7, 9));
}

TEST_CASE("uniform draws respect their half-open ranges", "[rng]") {
  RngStream rng(99);
  for (int i = 0; i < 20000; ++i) {
    double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    double v = rng.uniform_open01();
    REQUIRE(v > 0.0);
    REQUIRE(v <= 1.0);
    double w = rng.uniform_sym();
    REQUIRE(w >= -1.0);
    REQUIRE(w <= 1.0);
  }
}

TEST_CASE("normal draws have roughly standard moments", "[rng]") {
  RngStream rng(2024);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("unit vectors have norm one", "[rng]") {
  RngStream rng(5);
  for (int d : {1, 2, 3, 17}) {
    for (int i = 0; i < 50; ++i) {
      REQUIRE(rng.unit_vector(d).norm() == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("compensated sum survives catastrophic cancellation", "[numeric]") {
  CompensatedSum s;
  s.add(1.0);
  s.add(1e100);
  s.add(1.0);
  s.add(-1e100);
  REQUIRE(s.value() == 2.0);
}

TEST_CASE("compensated sum of many small terms is exact to one ulp", "[numeric]") {
  CompensatedSum s;
  for (int i = 0; i < 10; ++i) s.add(0.1);
  REQUIRE(s.value() == 1.0);
}

TEST_CASE("sign convention maps zero to plus one", "[numeric]") {
  REQUIRE(sign_or_one(0.0) == 1.0);
  REQUIRE(sign_or_one(-0.0) == 1.0);
  REQUIRE(sign_or_one(3.5) == 1.0);
  REQUIRE(sign_or_one(-2.0) == -1.0);
}

TEST_CASE("relative gap normalizes by the larger magnitude above one", "[numeric]") {
  REQUIRE(relative_gap(1.0, 1.0) == 0.0);
  REQUIRE(relative_gap(0.0, 0.5) == 0.5);
  REQUIRE(relative_gap(200.0, 100.0) == Catch::Approx(0.5));
}

TEST_CASE("doubles format to shortest round-trip strings", "[numeric]") {
  REQUIRE(format_double(0.1) == "0.1");
  REQUIRE(format_double(1.0) == "1");
  REQUIRE(format_double(-2.5) == "-2.5");
  for (double v : {5.481805205164662e-07, 364.84331805802015, 3.0, 1e-300}) {
    REQUIRE(std::stod(format_double(v)) == v);
  }
}
