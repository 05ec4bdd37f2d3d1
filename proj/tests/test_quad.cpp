#include <doctest.h>

#include <cmath>

#include "cbi/quad.hpp"

using namespace cbi::quad;
using doctest::Approx;

TEST_CASE("adaptive Gauss-Kronrod on smooth integrands") {
  auto r = integrate_adaptive([](double) { return 1.0; }, 0.0, 1.0, 1e-12);
  CHECK(r.status == Status::Converged);
  CHECK(r.value == Approx(1.0).epsilon(1e-14));
  r = integrate_adaptive([](double z) { return std::exp(-z); }, 0.0, 10.0, 1e-10);
  CHECK(r.value == Approx(1.0 - std::exp(-10.0)).epsilon(1e-12));
  CHECK(r.abs_error <= 1e-10);
}

TEST_CASE("breakpoints are honoured") {
  Options o;
  o.abs_tol = 1e-12;
  o.breakpoints = {0.3};
  const auto r = integrate_adaptive([](double z) { return std::abs(z - 0.3); }, 0.0, 1.0, o);
  CHECK(r.value == Approx(0.5 * (0.09 + 0.49)).epsilon(1e-13));
}

TEST_CASE("power singularity at the lower endpoint") {
  const double eps = 1e-4;
  auto r = integrate_adaptive([](double z) { return 1.0 / std::sqrt(z); }, eps, 1.0, 1e-10);
  CHECK(r.value == Approx(2.0 - 2.0 * std::sqrt(eps)).epsilon(1e-10));
  r = integrate_power_singular([](double z) { return 1.0 / std::sqrt(z); }, 0.0, 1.0, 0.5, 1e-12);
  CHECK(r.value == Approx(2.0).epsilon(1e-11));
  r = integrate_power_singular([](double z) { return std::pow(z - 1.0, -0.7); }, 1.0, 2.0, 0.3, 1e-12);
  CHECK(r.value == Approx(1.0 / 0.3).epsilon(1e-10));
  r = integrate_power_singular([](double z) { return std::exp(-z) / std::sqrt(z); }, 0.0, INFINITY, 0.5, 1e-12, 1.0);
  CHECK(r.value == Approx(std::sqrt(M_PI)).epsilon(1e-10));
}

TEST_CASE("exponentially decaying tails") {
  auto r = integrate_decaying_tail([](double z) { return std::exp(-2.0 * z); }, 0.0, 2.0, 1e-12);
  CHECK(r.value == Approx(0.5).epsilon(1e-10));
  r = integrate_decaying_tail([](double z) { return z * std::exp(-z); }, 0.0, 0.9, 1e-12);
  CHECK(r.value == Approx(1.0).epsilon(1e-10));
  r = integrate_decaying_tail([](double z) { return std::exp(-z) * std::sqrt(z); }, 0.0, 1.0, 1e-12);
  CHECK(r.value == Approx(std::tgamma(1.5)).epsilon(1e-9));
}

TEST_CASE("divergence probe") {
  auto p = divergence_probe([](double z) { return 1.0 / z; }, 0.0, Side::FromAbove);
  CHECK(p.kind == ProbeResult::Kind::Diverges);
  p = divergence_probe([](double z) { return 1.0 / std::sqrt(z); }, 0.0, Side::FromAbove);
  REQUIRE(p.kind == ProbeResult::Kind::ConvergesTo);
  CHECK(p.value == Approx(2.0).epsilon(1e-6));
  // antiderivative 1 / log(1/z); from 0 to 1/2 the integral is 1 / log 2
  p = divergence_probe([](double z) { const double l = std::log(1.0 / z); return 1.0 / (z * l * l); }, 0.0,
                       Side::FromAbove, 0.5);
  CHECK(p.kind == ProbeResult::Kind::ConvergesTo);
  p = divergence_probe([](double z) { return 1.0 / (1.0 - z); }, 1.0, Side::FromBelow);
  CHECK(p.kind == ProbeResult::Kind::Diverges);
}
