#include <doctest.h>

#include <cmath>

#include "cbi/mechanism.hpp"
#include "cbi/sim.hpp"
#include "cbi/transform.hpp"

using namespace cbi;
using namespace cbi::sim;
using doctest::Approx;

namespace {
SimConfig base(std::size_t paths, double horizon, std::uint64_t offset = 0) {
  SimConfig c;
  c.path_count = paths;
  c.horizon = horizon;
  c.seed = 42;
  c.stream_offset = offset;
  return c;
}
}  // namespace

TEST_CASE("config validation") {
  SimConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.step_count() == 10000);
  c.dt = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = SimConfig{};
  c.escape_factor = 1.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  CHECK(scheme_from_string(to_string(Scheme::EulerFullTruncation)) == Scheme::EulerFullTruncation);
  CHECK_THROWS(scheme_from_string("milstein"));
}

TEST_CASE("pure CB started at zero stays at zero") {
  auto c = base(10, 1.0);
  for (const auto& p : simulate_cir_exact(2.0, 0.0, 0.0, 0.0, c))
    for (double x : p.values) CHECK(x == 0.0);
}

TEST_CASE("exact CIR terminal law") {
  const CBIModel m(BranchingMechanism::quadratic(2.0), ImmigrationMechanism::linear(1.0));
  ExactCIRStepper st(2.0, 0.0, 1.0);
  const auto xt = terminal_values(st, 1.0, 1.0, base(20000, 1.0, 100));
  const auto first = mc_mean(xt);
  CHECK(std::abs(first.mean - 2.0) < 3.0 * first.std_error);
  std::vector<double> w;
  for (double y : xt) w.push_back(std::exp(-y));
  const auto e = mc_mean(w);
  CHECK(std::abs(e.mean - marginal_laplace(m, 1.0, 1.0, 1.0)) < 3.0 * e.std_error);
}

TEST_CASE("Euler without jumps agrees with the exact CIR scheme") {
  const CBIModel m(BranchingMechanism::quadratic(2.0, 0.5), ImmigrationMechanism::linear(1.0));
  auto c = base(20000, 1.0, 200);
  EulerStepper eu(m, c.small_jump_cutoff);
  ExactCIRStepper ex(2.0, 0.5, 1.0);
  const auto a = mc_mean(terminal_values(eu, 1.0, 1.0, c));
  c.stream_offset = 300000;
  const auto b = mc_mean(terminal_values(ex, 1.0, 1.0, c));
  CHECK(std::abs(a.mean - b.mean) < 3.0 * joint_stderr(a, b));
}

TEST_CASE("linear branching with unit jumps decays between jumps") {
  LevyMeasure nu;
  nu.atoms = {{1.0, 1.0}};
  const CBIModel m(BranchingMechanism::linear(1.0), ImmigrationMechanism::triplet(0.0, nu));
  auto c = base(20, 5.0);
  c.escape_factor = kInf;
  EulerStepper st(m, c.small_jump_cutoff);
  std::size_t jumps = 0;
  for (const auto& p : simulate_paths(st, 0.0, c))
    for (std::size_t k = 0; k + 1 < p.values.size(); ++k) {
      const double decayed = p.values[k] * std::exp(-c.dt);
      const double next = p.values[k + 1];
      if (next > p.values[k] + 0.5) {
        ++jumps;
        CHECK(next - decayed == Approx(std::round(next - decayed)).epsilon(1e-3));
      } else {
        CHECK(std::abs(next - decayed) <= 1e-6 * std::max(1.0, p.values[k]));
      }
    }
  // 20 paths at rate 1 over 5 time units
  CHECK(jumps > 50);
  CHECK(jumps < 160);
}

TEST_CASE("hitting-time and minimum estimators on stored paths") {
  PathSample p;
  const double dt = 1e-3, x = 2.0, a = 1.0, gamma = 0.7;
  for (int k = 0; k <= 2000; ++k) {
    p.times.push_back(k * dt);
    p.values.push_back(x * std::exp(-gamma * k * dt));
    p.step_min.push_back(p.values.back());
  }
  const auto t = estimate_hitting_time(p, a);
  REQUIRE(t.has_value());
  CHECK(std::abs(*t - std::log(x / a) / gamma) <= dt);

  PathSample up;
  for (int k = 0; k <= 100; ++k) {
    up.times.push_back(k * dt);
    up.values.push_back(1.0 + k * dt);
    up.step_min.push_back(up.values.back());
  }
  up.running_min = 1.0;
  CHECK_FALSE(estimate_hitting_time(up, 0.5).has_value());
  CHECK(estimate_minimum(up) == 1.0);
}

TEST_CASE("Monte Carlo estimators") {
  auto e = mc_laplace(std::vector<CensoredSample>(50, {0.0, false}), 1.0);
  CHECK(e.mean == 1.0);
  CHECK(e.std_error == 0.0);
  e = mc_laplace(std::vector<CensoredSample>(50, {std::log(2.0) / 3.0, false}), 3.0);
  CHECK(e.mean == Approx(0.5).epsilon(1e-14));
  std::vector<CensoredSample> s(100, {0.1, false});
  for (int i = 0; i < 30; ++i) s[i] = {kInf, true};
  e = mc_laplace(s, 0.01, 5.0);
  CHECK(e.censored_frac == Approx(0.3));
  CHECK(e.bias_bound == Approx(0.3 * std::exp(-0.05)));
  CHECK(e.flagged);
  CHECK(mc_mean({1.0, 2.0, 3.0}).mean == Approx(2.0));
}

TEST_CASE("paths depend only on seed and index, not on worker count") {
  ExactCIRStepper st(2.0, 0.0, 0.5);
  auto c = base(64, 20.0, 5000);
  PassageOptions po;
  po.level = 1.0;
  const auto one = run_passages(st, 2.0, c, po);
  c.workers = 3;
  const auto three = run_passages(st, 2.0, c, po);
  REQUIRE(one.size() == three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].hit_time == three[i].hit_time);
    CHECK(one[i].occupation == three[i].occupation);
  }
  const auto again = run_passage(st, 2.0, c, 17, po);
  CHECK(again.hit_time == one[17].hit_time);
}

TEST_CASE("recurrent CIR hitting transform by simulation") {
  const CBIModel m(BranchingMechanism::quadratic(2.0), ImmigrationMechanism::linear(0.5));
  ExactCIRStepper st(2.0, 0.0, 0.5);
  const auto c = base(4000, 40.0, 7000);
  PassageOptions po;
  po.level = 1.0;
  std::vector<CensoredSample> s;
  for (const auto& o : run_passages(st, 2.0, c, po)) s.push_back({o.hit_time, !o.hit});
  const auto e = mc_laplace(s, 0.5, c.horizon);
  CHECK(std::abs(e.mean - hitting_time_laplace(m, 2.0, 1.0, 0.5).value) < 3.0 * e.std_error);
}

TEST_CASE("supercritical CB hit probability by simulation") {
  ExactCIRStepper st(2.0, -1.0, 0.0);
  const auto c = base(4000, 30.0, 90000);
  PassageOptions po;
  po.level = 1.0;
  po.escape_level = c.escape_factor * 2.0;
  std::vector<double> hit;
  for (const auto& o : run_passages(st, 2.0, c, po)) hit.push_back(o.hit ? 1.0 : 0.0);
  const auto e = mc_mean(hit);
  CHECK(std::abs(e.mean - std::exp(-1.0)) < 3.0 * e.std_error);
}

TEST_CASE("jump sampler reproduces the restricted measure") {
  LevyMeasure m;
  m.density_form = TemperedPower{1.0, 0.5, 0.0};
  m.upper = 100.0;
  m.atoms = {{3.0, 0.5}};
  const double eps = 0.01;
  const auto js = JumpSampler::from_measure(m, eps);
  CHECK(js.rate() == Approx(levy_tail(m, eps)).epsilon(1e-6));
  RngStream r(3, 0);
  const int n = 100000;
  int above1 = 0, atom = 0;
  for (int i = 0; i < n; ++i) {
    const double u = js.sample(r);
    REQUIRE(u >= eps);
    REQUIRE(u <= 100.0);
    above1 += u >= 1.0;
    atom += u == 3.0;
  }
  const double p1 = levy_tail(m, 1.0) / js.rate();
  CHECK(std::abs(above1 / double(n) - p1) < 4.0 * std::sqrt(p1 * (1 - p1) / n));
  const double pa = 0.5 / js.rate();
  CHECK(std::abs(atom / double(n) - pa) < 4.0 * std::sqrt(pa * (1 - pa) / n));
}

TEST_CASE("stepper factory") {
  const CBIModel cir(BranchingMechanism::quadratic(2.0), ImmigrationMechanism::linear(0.5));
  SimConfig c;
  CHECK(dynamic_cast<const ExactCIRStepper*>(make_stepper(cir, c).get()) != nullptr);
  const CBIModel st(BranchingMechanism::stable(1.0, 1.5), ImmigrationMechanism::stable(1.0, 0.5));
  CHECK_THROWS_AS(make_stepper(st, c), DomainError);
  c.scheme = Scheme::EulerFullTruncation;
  CHECK(dynamic_cast<const EulerStepper*>(make_stepper(st, c).get()) != nullptr);
  const CBIModel lt(BranchingMechanism::linear(1.0), ImmigrationMechanism::log_tail(LogTailKind::InverseLog));
  CHECK_THROWS_AS(make_stepper(lt, c), DomainError);
}
