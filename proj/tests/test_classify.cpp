#include <doctest.h>

#include "cbi/classify.hpp"

using namespace cbi;

namespace {
CBIModel cir(double sigma2, double b) {
  return CBIModel(BranchingMechanism::quadratic(sigma2), ImmigrationMechanism::linear(b));
}
CBIModel stable(double alpha, double beta, double d, double dprime) {
  return CBIModel(BranchingMechanism::stable(d, alpha), ImmigrationMechanism::stable(dprime, beta));
}
}  // namespace

TEST_CASE("CIR verdicts around 2b = sigma2") {
  auto c = classify(cir(2.0, 0.5));
  CHECK(c.longrun == LongRun::NullRecurrent);
  CHECK(c.boundary_polar == Polarity::NotPolar);
  c = classify(cir(2.0, 1.0));
  CHECK(c.criticality == Criticality::Critical);
  CHECK(c.longrun == LongRun::NullRecurrent);
  CHECK(c.boundary_polar == Polarity::Polar);
  CHECK_FALSE(c.evidence.empty());
  c = classify(cir(2.0, 1.5));
  CHECK(c.longrun == LongRun::Transient);
  CHECK(c.boundary_polar == Polarity::Polar);
}

TEST_CASE("stable family regimes") {
  struct Case {
    double alpha, beta, d, dprime;
    LongRun longrun;
    Polarity polar;
  };
  const Case cases[] = {
      {1.5, 0.7, 1, 1, LongRun::PositiveRecurrent, Polarity::Polar},
      {1.5, 0.3, 1, 1, LongRun::Transient, Polarity::NotPolar},
      {1.5, 0.5, 1, 1, LongRun::Transient, Polarity::Polar},
      {1.5, 0.5, 1, 0.5, LongRun::NullRecurrent, Polarity::Polar},
      {1.5, 0.5, 1, 0.4, LongRun::NullRecurrent, Polarity::NotPolar},
      {1.2, 0.1, 1, 3, LongRun::Transient, Polarity::NotPolar},
      // beta = 0.5 < alpha - 1 = 1
      {2.0, 0.5, 1, 1, LongRun::Transient, Polarity::NotPolar},
  };
  for (const auto& k : cases) {
    CAPTURE(k.alpha);
    CAPTURE(k.beta);
    CAPTURE(k.dprime);
    const auto t = stable_family_classify(k.alpha, k.beta, k.d, k.dprime);
    CHECK(t.longrun == k.longrun);
    CHECK(t.boundary_polar == k.polar);
    const auto g = classify(stable(k.alpha, k.beta, k.d, k.dprime));
    CHECK(g.longrun == k.longrun);
    CHECK(g.boundary_polar == k.polar);
  }
}

TEST_CASE("boundary case carries the liminf note") {
  const auto c = stable_family_classify(1.5, 0.5, 1.0, 0.5);
  bool noted = false;
  for (const auto& n : c.notes) noted |= n.find("liminf") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("supercritical branching is transient") {
  const auto psi = BranchingMechanism::mixed(-1.0, 2.0, 0.0, 1.5);
  for (const auto& phi : {ImmigrationMechanism::linear(0.1), ImmigrationMechanism::stable(1.0, 0.5)}) {
    const auto c = classify(CBIModel(psi, phi));
    CHECK(c.criticality == Criticality::Supercritical);
    CHECK(c.longrun == LongRun::Transient);
  }
}

TEST_CASE("positive recurrence test") {
  CHECK(positive_recurrence_test(CBIModel(BranchingMechanism::linear(1.0), ImmigrationMechanism::linear(2.0))) ==
        Decision::Yes);
  CHECK(positive_recurrence_test(
            CBIModel(BranchingMechanism::linear(1.0), ImmigrationMechanism::log_tail(LogTailKind::InverseLogLog))) ==
        Decision::No);
  CHECK(positive_recurrence_test(cir(2.0, 1.0)) == Decision::No);
  CHECK(recurrence_classify(CBIModel(BranchingMechanism::linear(1.0), ImmigrationMechanism::linear(2.0))) ==
        LongRun::PositiveRecurrent);
}

TEST_CASE("log-tail immigration is null recurrent under linear branching") {
  const CBIModel m(BranchingMechanism::linear(1.0), ImmigrationMechanism::log_tail(LogTailKind::InverseLogLog));
  CHECK(recurrence_classify(m) == LongRun::NullRecurrent);
}

TEST_CASE("bounded variation boundary") {
  // v = b / d = 0.5 > 0; the process never goes below v after reaching it
  const auto c = classify(CBIModel(BranchingMechanism::linear(2.0), ImmigrationMechanism::linear(1.0)));
  CHECK(c.v == doctest::Approx(0.5));
  CHECK(c.d == doctest::Approx(2.0));
}
