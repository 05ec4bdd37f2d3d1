#include <doctest.h>

#include <cmath>
#include <tuple>
#include <vector>

#include "cbi/rng.hpp"

using namespace cbi;
using doctest::Approx;

TEST_CASE("Philox4x32-10 known answers") {
  auto c = philox4x32_10({0, 0, 0, 0}, {0, 0});
  CHECK(c == PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  c = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(c == PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  c = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  CHECK(c == PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are pure functions of seed and index") {
  RngStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  std::vector<double> xa, xb, xc, xd;
  for (int i = 0; i < 1000; ++i) {
    xa.push_back(a.uniform());
    xb.push_back(b.uniform());
    xc.push_back(c.uniform());
    xd.push_back(d.uniform());
  }
  CHECK(xa == xb);
  CHECK(xa != xc);
  CHECK(xa != xd);
}

TEST_CASE("uniform stays inside the open interval") {
  RngStream r(1, 0);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

namespace {
template <class Draw>
std::pair<double, double> moments(Draw draw, int n) {
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    s2 += x * x;
  }
  const double m = s / n;
  return {m, s2 / n - m * m};
}
}  // namespace

TEST_CASE("distribution moments") {
  const int n = 200000;
  RngStream r(11, 0);
  auto [m, v] = moments([&] { return r.normal(); }, n);
  CHECK(std::abs(m) < 4.0 / std::sqrt(n));
  CHECK(v == Approx(1.0).epsilon(0.02));
  std::tie(m, v) = moments([&] { return r.exponential(); }, n);
  CHECK(m == Approx(1.0).epsilon(0.02));
  for (double shape : {0.3, 1.0, 4.5}) {
    std::tie(m, v) = moments([&] { return r.gamma(shape); }, n);
    CHECK(m == Approx(shape).epsilon(0.03));
    CHECK(v == Approx(shape).epsilon(0.05));
  }
  for (double mean : {0.2, 3.0, 60.0}) {
    std::tie(m, v) = moments([&] { return static_cast<double>(r.poisson(mean)); }, n);
    CHECK(m == Approx(mean).epsilon(0.03));
    CHECK(v == Approx(mean).epsilon(0.05));
  }
  CHECK(r.poisson(0.0) == 0u);
}
