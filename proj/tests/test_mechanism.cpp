#include <doctest.h>

#include <cmath>

#include "cbi/mechanism.hpp"

using namespace cbi;
using doctest::Approx;

TEST_CASE("branching mechanism values") {
  CHECK(BranchingMechanism::quadratic(2.0)(2.0) == Approx(4.0).epsilon(1e-14));
  CHECK(BranchingMechanism::stable(1.0, 1.5)(4.0) == Approx(8.0).epsilon(1e-14));
  CHECK(BranchingMechanism::linear(0.7)(3.0) == Approx(2.1).epsilon(1e-14));
  const auto m = BranchingMechanism::mixed(-1.0, 2.0, 0.0, 1.5);
  CHECK(m(3.0) == Approx(6.0).epsilon(1e-14));
}

TEST_CASE("triplet with an atom matches the closed form") {
  LevyMeasure pi;
  pi.atoms = {{0.5, 1.0}};
  const auto psi = BranchingMechanism::triplet(0.0, 0.0, pi);
  for (double q : {0.3, 1.0, 4.0}) {
    CHECK(psi(q) == Approx(std::exp(-0.5 * q) - 1.0 + 0.5 * q).epsilon(1e-12));
    CHECK(psi.derivative(q) == Approx(0.5 - 0.5 * std::exp(-0.5 * q)).epsilon(1e-10));
  }
  CHECK(psi.effective_drift() == Approx(0.5));
}

TEST_CASE("triplet with a narrow density against a midpoint rule") {
  LevyMeasure pi;
  pi.density_form = TemperedPower{1.0, 0.5, 1.0};
  pi.lower = 0.9;
  pi.upper = 1.1;
  const auto psi = BranchingMechanism::triplet(0.2, 0.0, pi);
  const double q = 1.0;
  const int n = 200000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = 0.9 + (i + 0.5) * 0.2 / n;
    s += (std::exp(-q * u) - 1.0 + q * u * (u < 1.0 ? 1.0 : 0.0)) * std::pow(u, -1.5) * std::exp(-u);
  }
  s *= 0.2 / n;
  CHECK(psi(q) == Approx(0.2 * q + s).epsilon(1e-6));
}

TEST_CASE("immigration mechanism values") {
  CHECK(ImmigrationMechanism::linear(1.0)(3.0) == Approx(3.0));
  CHECK(ImmigrationMechanism::derived_from(BranchingMechanism::quadratic(1.0))(2.0) == Approx(2.0).epsilon(1e-14));
  CHECK(ImmigrationMechanism::stable(2.0, 0.5)(4.0) == Approx(4.0).epsilon(1e-14));
  CHECK(ImmigrationMechanism::zero().is_zero());
}

TEST_CASE("log-tail immigration against an independent high-precision oracle") {
  // q (1 - e^{-100 q}) tail(100) / q + q int_100^inf e^{-qu} tail(u) du, evaluated at 30 digits
  const auto loglog = ImmigrationMechanism::log_tail(LogTailKind::InverseLogLog);
  const auto inv = ImmigrationMechanism::log_tail(LogTailKind::InverseLog, 1.0);
  CHECK(loglog(0.001) == Approx(0.0890009069056067).epsilon(1e-10));
  CHECK(loglog(0.01) == Approx(0.133376815518151).epsilon(1e-10));
  CHECK(loglog(1.0) == Approx(0.142188408804074).epsilon(1e-10));
  CHECK(inv(0.001) == Approx(0.160120455767867).epsilon(1e-10));
  CHECK(inv(0.01) == Approx(0.208430652328746).epsilon(1e-10));
  CHECK(inv(1.0) == Approx(0.217147240951626).epsilon(1e-10));
  CHECK(std::isinf(loglog.log_moment()));
}

TEST_CASE("derivative at zero and criticality") {
  CHECK(BranchingMechanism::quadratic(2.0).derivative_at_zero() == 0.0);
  CHECK(BranchingMechanism::mixed(-1.0, 2.0, 0.0, 1.5).derivative_at_zero() == Approx(-1.0));
  CHECK(BranchingMechanism::linear(0.7).derivative_at_zero() == Approx(0.7));
  CHECK(BranchingMechanism::quadratic(2.0).criticality() == Criticality::Critical);
  CHECK(BranchingMechanism::linear(1.0).criticality() == Criticality::Subcritical);
  CHECK(BranchingMechanism::mixed(-1.0, 2.0, 0.0, 1.5).criticality() == Criticality::Supercritical);
}

TEST_CASE("effective drift and boundary") {
  CHECK(BranchingMechanism::linear(2.0).effective_drift() == Approx(2.0));
  CHECK(std::isinf(BranchingMechanism::quadratic(1.0).effective_drift()));
  CHECK(std::isinf(BranchingMechanism::stable(1.0, 1.5).effective_drift()));
  CHECK(CBIModel(BranchingMechanism::quadratic(2.0), ImmigrationMechanism::linear(0.5)).boundary() == 0.0);
  CHECK(CBIModel(BranchingMechanism::linear(2.0), ImmigrationMechanism::linear(1.0)).boundary() == Approx(0.5));
  CHECK(CBIModel(BranchingMechanism::linear(1.0), ImmigrationMechanism::stable(1.0, 0.5)).boundary() == 0.0);
}

TEST_CASE("largest root of Psi = mu") {
  CHECK(BranchingMechanism::quadratic(2.0).root(4.0) == Approx(2.0).epsilon(1e-12));
  CHECK(BranchingMechanism::quadratic(2.0).root(0.0) == 0.0);
  CHECK(BranchingMechanism::linear(1.0).root(0.0) == 0.0);
  CHECK(BranchingMechanism::quadratic(2.0, -1.0).root(0.0) == Approx(1.0).epsilon(1e-12));
  CHECK(BranchingMechanism::quadratic(4.0, -1.0).root(0.0) == Approx(0.5).epsilon(1e-12));
  const auto s = BranchingMechanism::stable(1.0, 1.5);
  CHECK(s(s.root(2.0)) == Approx(2.0).epsilon(1e-12));
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(BranchingMechanism::stable(1.0, 2.5), DomainError);
  CHECK_THROWS_AS(BranchingMechanism::stable(-1.0, 1.5), DomainError);
  CHECK_THROWS_AS(BranchingMechanism::linear(-1.0), DomainError);
  CHECK_THROWS_AS(ImmigrationMechanism::stable(1.0, 1.0), DomainError);
  CHECK_THROWS_AS(ImmigrationMechanism::linear(-0.5), DomainError);
  LevyMeasure heavy;
  heavy.density_form = TemperedPower{1.0, 1.2, 0.0};  // int (1 ^ u) nu(du) = inf near 0
  CHECK_THROWS_AS(ImmigrationMechanism::triplet(0.0, heavy), DomainError);
}

TEST_CASE("Levy measure helpers") {
  LevyMeasure m;
  m.density_form = TemperedPower{1.0, 0.5, 0.0};
  m.atoms = {{2.0, 0.25}};
  // tail of u^{-1.5} from 1 is 2, plus the atom
  CHECK(levy_tail(m, 1.0) == Approx(2.25).epsilon(1e-8));
  // int_0^1 u * u^{-1.5} du = 2
  CHECK(levy_moment(m, 0.0, 1.0, 1.0) == Approx(2.0).epsilon(1e-8));
}
