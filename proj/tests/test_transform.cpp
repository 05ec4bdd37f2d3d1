#include <doctest.h>

#include <cmath>

#include "cbi/transform.hpp"

using namespace cbi;
using doctest::Approx;

namespace {
CBIModel cir(double sigma2, double b) {
  return CBIModel(BranchingMechanism::quadratic(sigma2), ImmigrationMechanism::linear(b));
}
CBIModel conditioned() {
  const auto psi = BranchingMechanism::quadratic(1.0);
  return CBIModel(psi, ImmigrationMechanism::derived_from(psi));
}
}  // namespace

TEST_CASE("exponent integrals") {
  const CBIModel zero(BranchingMechanism::quadratic(2.0), ImmigrationMechanism::zero());
  InvariantFunction F0(zero, {0.0, 0.0, 1.0});
  CHECK(F0.J_phi(3.0) == 0.0);
  // Phi / Psi = b / q
  InvariantFunction F1(cir(2.0, 1.0), {0.0, 0.0, 1.0});
  CHECK(F1.J_phi(std::exp(1.0)) == Approx(1.0).epsilon(1e-10));
  // Phi = Psi' gives log Psi(z) - log Psi(theta)
  InvariantFunction F2(conditioned(), {0.0, 0.0, 1.0});
  CHECK(F2.J_phi(4.0) == Approx(std::log(8.0) - std::log(0.5)).epsilon(1e-10));
}

TEST_CASE("invariant density g") {
  const CBIModel zero(BranchingMechanism::quadratic(2.0), ImmigrationMechanism::zero());
  InvariantFunction F(zero, {0.0, 0.0, 1.0});
  for (double z : {0.5, 2.0, 7.0}) CHECK(F.g(z) == Approx(1.0 / (z * z)).epsilon(1e-10));
  InvariantFunction G(conditioned(), {0.0, 0.0, 1.5});
  for (double z : {0.1, 1.0, 10.0}) CHECK(G.g(z) == Approx(1.0 / 1.125).epsilon(1e-10));
}

TEST_CASE("invariant function f") {
  // 1 / Psi(theta) integrated against e^{-xz}: f0(x) = 1 / (Psi(theta) x)
  InvariantFunction G(conditioned(), {0.0, 0.0, 1.0});
  for (double x : {0.5, 1.0, 2.0, 5.0}) CHECK(x * G.log_f(x).value() == Approx(2.0).epsilon(1e-9));
  // Psi = q^2 without immigration: int_0 dz / z^2 diverges
  const CBIModel zero(BranchingMechanism::quadratic(2.0), ImmigrationMechanism::zero());
  CHECK(f_eval(zero, {0.0, 0.0, 1.0}, 2.0).infinite());
  // CIR sigma2=2, b=1.5: int_0^inf e^{-2z} z^{-1/2} dz = sqrt(pi / 2)
  const auto f = f_eval(cir(2.0, 1.5), {0.0, 0.0, 1.0}, 2.0);
  CHECK(f.value() == Approx(std::sqrt(M_PI / 2.0)).epsilon(1e-10));
}

TEST_CASE("hitting-time transform on the recurrent CIR") {
  const auto m = cir(2.0, 0.5);
  double prev = 0.0;
  for (double lam : {1e-1, 1e-3, 1e-6}) {
    const double v = hitting_time_laplace(m, 2.0, 1.0, lam).value;
    CHECK(v == Approx(std::exp(-2.0 * std::sqrt(lam) * (std::sqrt(2.0) - 1.0))).epsilon(1e-8));
    CHECK(v > prev);
    CHECK(v < 1.0);
    prev = v;
  }
  // lambda -> inf from just above a
  CHECK(hitting_time_laplace(m, 1.05, 1.0, 1e4).value == Approx(std::exp(-200.0 * (std::sqrt(1.05) - 1.0))).epsilon(1e-6));
  CHECK(hitting_time_laplace(m, 1.05, 1.0, 1e6).value < 1e-20);
}

TEST_CASE("polar boundary gives zero") {
  for (double b : {1.0, 1.5}) {
    const auto v = hitting_time_laplace(cir(2.0, b), 2.0, 0.0, 0.5);
    CHECK(v.value == 0.0);
    CHECK(v.status == TransformStatus::PolarBoundary);
  }
}

TEST_CASE("joint transform") {
  const auto m = cir(2.0, 0.5);
  for (double lam : {0.1, 1.0})
    CHECK(joint_laplace(m, 2.0, 1.0, lam, 0.0).value == Approx(hitting_time_laplace(m, 2.0, 1.0, lam).value).epsilon(1e-9));
  const CBIModel cb(BranchingMechanism::quadratic(2.0), ImmigrationMechanism::zero());
  CHECK(joint_laplace(cb, 2.0, 1.0, 1e-9, 1.0).value == Approx(std::exp(-1.0)).epsilon(1e-7));
  const double base = joint_laplace(m, 2.0, 1.0, 5.0, 3.0).value;
  CHECK(base > 0.0);
  CHECK(base < 1.0);
  CHECK(joint_laplace(m, 2.0, 1.0, 6.0, 3.0).value < base);
  CHECK(joint_laplace(m, 2.0, 1.0, 5.0, 4.0).value < base);
}

TEST_CASE("total population") {
  const CBIModel cb(BranchingMechanism::quadratic(1.0), ImmigrationMechanism::zero());
  const auto closed = total_population_laplace(cb, 2.0, 1.0, 2.0);
  CHECK(closed.status == TransformStatus::ClosedForm);
  CHECK(closed.value == Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(total_population_quadrature(cb, 2.0, 1.0, 2.0).value == Approx(std::exp(-2.0)).epsilon(1e-8));
  CHECK(total_population_laplace(conditioned(), 2.0, 1.0, 2.0).value == Approx(0.5 * std::exp(-2.0)).epsilon(1e-8));
  CHECK(total_population_laplace(conditioned(), 2.0, 1.0, 400.0).value < 1e-10);
}

TEST_CASE("minimum law") {
  CHECK(minimum_cdf(conditioned(), 2.0, 1.0).value == Approx(0.5).epsilon(1e-8));
  CHECK(minimum_cdf(conditioned(), 1.0, 0.25).value == Approx(0.25).epsilon(1e-8));
  const CBIModel sup(BranchingMechanism::quadratic(2.0, -1.0), ImmigrationMechanism::zero());
  CHECK(minimum_cdf(sup, 2.0, 1.0).value == Approx(std::exp(-1.0)).epsilon(1e-6));
  CHECK_THROWS_AS(minimum_cdf(cir(2.0, 0.5), 2.0, 1.0), DomainError);
}

TEST_CASE("supercritical hit probability") {
  const auto psi = BranchingMechanism::quadratic(2.0, -1.0);
  CHECK(supercritical_cb_hit_probability(psi, 3.0, 1.0) == Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(supercritical_cb_hit_probability(psi, 1.0, 1.0) == 1.0);
  CHECK(supercritical_cb_hit_probability(BranchingMechanism::quadratic(4.0, -1.0), 2.0, 0.0) ==
        Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("simplified form agrees with the general ratio") {
  const auto psi = BranchingMechanism::quadratic(2.0);
  const CBIModel m(psi, ImmigrationMechanism::zero());
  CHECK(cb_hitting_simplified(psi, 2.0, 1.0, 1.0).value ==
        Approx(hitting_time_laplace(m, 2.0, 1.0, 1.0).value).epsilon(1e-8));
  const auto sup = BranchingMechanism::quadratic(2.0, -1.0);
  CHECK(cb_hitting_simplified(sup, 2.0, 1.0, 1e-9).value == Approx(std::exp(-1.0)).epsilon(1e-6));
  const double far = cb_hitting_simplified(psi, 60.0, 1.0, 1.0).value;
  CHECK(far < cb_hitting_simplified(psi, 20.0, 1.0, 1.0).value);
  CHECK(far < 1e-5);
}

TEST_CASE("flow") {
  const auto half = BranchingMechanism::quadratic(1.0);
  CHECK(v_flow(half, 2.0, 1.0).v == Approx(1.0).epsilon(1e-10));
  const auto s = v_flow(half, 2.0, 0.0, nullptr);
  CHECK(s.v == 2.0);
  CHECK(s.accumulated_phi == 0.0);
  CHECK(v_flow(BranchingMechanism::linear(1.0), 1.0, std::log(2.0)).v == Approx(0.5).epsilon(1e-10));
}

TEST_CASE("marginal transform") {
  const auto m = cir(2.0, 1.0);
  CHECK(marginal_laplace(m, 1.0, 1.0, 0.0) == 1.0);
  CHECK(marginal_laplace(m, 1.0, 1.0, 1.0) == Approx(std::exp(-0.5) / 2.0).epsilon(1e-10));
  // linear Psi, linear Phi: stationary law Gamma(b / gamma... ) independent of x at large t
  const CBIModel pr(BranchingMechanism::mixed(1.0, 1.0, 0.0, 1.5), ImmigrationMechanism::linear(1.0));
  CHECK(marginal_laplace(pr, 0.5, 60.0, 1.0) == Approx(marginal_laplace(pr, 4.0, 60.0, 1.0)).epsilon(1e-9));
}
