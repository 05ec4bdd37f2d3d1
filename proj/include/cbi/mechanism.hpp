#pragma once

// Branching and immigration mechanisms of a CBI process.
//
//   Psi(q) = gamma q + sigma^2 q^2 / 2 + int (e^{-qu} - 1 + qu 1{u<1}) pi(du)
//   Phi(q) = b q + int (1 - e^{-qu}) nu(du)
//
// Closed-form catalog variants are evaluated exactly; general Levy triplets go
// through the adaptive quadrature in quad.hpp.

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cbi/errors.hpp"

namespace cbi {

struct Atom {
  double location = 1.0;
  double mass = 1.0;
};

// scale * u^{-1-rho} * exp(-decay * u)
struct TemperedPower {
  double scale = 1.0;
  double rho = 0.5;
  double decay = 0.0;
};

using CustomDensity = std::function<double(double)>;

// A Levy measure given as a density on [lower, upper] plus finitely many atoms.
// Near 0 the density must behave like u^{-1-small_exponent} and near infinity like
// u^{-1-tail_exponent}; the exponents are declared by the caller (derived
// automatically for TemperedPower) and decide bounded variation and the
// finiteness of first moments. They are never inferred numerically.
struct LevyMeasure {
  std::variant<std::monostate, TemperedPower, CustomDensity> density_form;
  double lower = 0.0;
  double upper = kInf;
  double small_exponent = 0.0;
  double tail_exponent = 1.0;
  std::vector<Atom> atoms;

  bool has_density() const { return density_form.index() != 0; }
  bool empty() const { return !has_density() && atoms.empty(); }
  double density(double u) const;
  double effective_small_exponent() const;
  double effective_tail_exponent() const;
  bool singular_at_zero() const { return has_density() && lower <= 0.0; }
  bool unbounded_support() const { return has_density() && upper == kInf; }
};

enum class Criticality { Subcritical, Critical, Supercritical };

std::string to_string(Criticality c);

// Leading behaviour c * u^p * L(u) of a mechanism near 0 or infinity, where L is
// either 1 or one of the slowly varying factors produced by the log-tail presets.
enum class SlowFactor { None, InverseLog, InverseLogLog };

struct PowerAsymptotic {
  double coefficient = 0.0;
  double exponent = 0.0;
  SlowFactor slow = SlowFactor::None;
};

struct PowerTerm {
  double coefficient;
  double power;
};

namespace psi_forms {
struct Linear {
  double gamma;
};
struct Quadratic {
  double sigma2;
  double gamma = 0.0;
};
struct StablePower {
  double d;
  double alpha;
};
struct Mixed {
  double gamma;
  double sigma2;
  double d;
  double alpha;
};
struct GeneralTriplet {
  double gamma;
  double sigma2;
  LevyMeasure pi;
};
}  // namespace psi_forms

class BranchingMechanism {
 public:
  using Form = std::variant<psi_forms::Linear, psi_forms::Quadratic, psi_forms::StablePower,
                            psi_forms::Mixed, psi_forms::GeneralTriplet>;

  explicit BranchingMechanism(Form form);

  static BranchingMechanism linear(double gamma) { return BranchingMechanism(psi_forms::Linear{gamma}); }
  static BranchingMechanism quadratic(double sigma2, double gamma = 0.0) {
    return BranchingMechanism(psi_forms::Quadratic{sigma2, gamma});
  }
  static BranchingMechanism stable(double d, double alpha) {
    return BranchingMechanism(psi_forms::StablePower{d, alpha});
  }
  static BranchingMechanism mixed(double gamma, double sigma2, double d, double alpha) {
    return BranchingMechanism(psi_forms::Mixed{gamma, sigma2, d, alpha});
  }
  static BranchingMechanism triplet(double gamma, double sigma2, LevyMeasure pi) {
    return BranchingMechanism(psi_forms::GeneralTriplet{gamma, sigma2, std::move(pi)});
  }

  double operator()(double q) const;
  double derivative(double q) const;
  // Psi(q + h) - Psi(q), accurate for h much smaller than q.
  double increment(double q, double h) const;
  // (Psi(q + h) - Psi(q)) / h without underflow for tiny h at q = 0.
  double increment_ratio(double q, double h) const;
  double derivative_at_zero() const { return derivative_at_zero_; }
  double effective_drift() const { return effective_drift_; }
  Criticality criticality() const { return criticality_; }
  double root(double mu) const;

  // Linear coefficient sigma^2 (+ 2d when the stable part is quadratic); the drift
  // of the conditioned immigration Psi' - Psi'(0+).
  double diffusion_coefficient() const;
  double sigma2() const;
  double gamma() const;

  std::optional<PowerAsymptotic> near_zero() const;
  std::optional<PowerAsymptotic> near_infinity() const;

  bool is_catalog() const { return !std::holds_alternative<psi_forms::GeneralTriplet>(form_); }
  const std::vector<PowerTerm>& terms() const { return terms_; }
  const LevyMeasure* levy_measure() const;
  const Form& form() const { return form_; }

 private:
  double triplet_value(double q) const;
  double triplet_derivative(double q) const;
  double triplet_increment(double q, double h) const;
  double minimizer() const;

  Form form_;
  std::vector<PowerTerm> terms_;
  double derivative_at_zero_ = 0.0;
  double effective_drift_ = kInf;
  Criticality criticality_ = Criticality::Critical;
};

enum class LogTailKind {
  InverseLog,     // tail nu([u, inf)) = alpha / log u on [100, inf)
  InverseLogLog,  // tail 1 / (log u log log u) on [100, inf)
};

namespace phi_forms {
struct LinearDrift {
  double b;
};
struct StablePower {
  double d;
  double beta;
};
// Phi = Psi' - Psi'(0+): immigration of the CB process conditioned on non-extinction.
struct DerivedFromPsi {
  BranchingMechanism psi;
};
struct GeneralTriplet {
  double b;
  LevyMeasure nu;
};
struct LogTailPreset {
  LogTailKind kind = LogTailKind::InverseLogLog;
  double alpha = 1.0;
};
}  // namespace phi_forms

class ImmigrationMechanism {
 public:
  using Form = std::variant<phi_forms::LinearDrift, phi_forms::StablePower, phi_forms::DerivedFromPsi,
                            phi_forms::GeneralTriplet, phi_forms::LogTailPreset>;

  explicit ImmigrationMechanism(Form form);

  static ImmigrationMechanism linear(double b) { return ImmigrationMechanism(phi_forms::LinearDrift{b}); }
  static ImmigrationMechanism stable(double d, double beta) {
    return ImmigrationMechanism(phi_forms::StablePower{d, beta});
  }
  static ImmigrationMechanism derived_from(const BranchingMechanism& psi) {
    return ImmigrationMechanism(phi_forms::DerivedFromPsi{psi});
  }
  static ImmigrationMechanism triplet(double b, LevyMeasure nu) {
    return ImmigrationMechanism(phi_forms::GeneralTriplet{b, std::move(nu)});
  }
  static ImmigrationMechanism log_tail(LogTailKind kind, double alpha = 1.0) {
    return ImmigrationMechanism(phi_forms::LogTailPreset{kind, alpha});
  }
  static ImmigrationMechanism zero() { return linear(0.0); }

  double operator()(double q) const;
  double derivative(double q) const;
  double drift() const { return drift_; }
  bool is_zero() const { return zero_; }

  // nu([u, inf)) for u > 0, used by the jump samplers.
  double tail_mass(double u) const;
  // int_0^eps u nu(du)
  double small_jump_mean(double eps) const;
  // int_1^inf log(u) nu(du); +inf when divergent.
  double log_moment() const;

  std::optional<PowerAsymptotic> near_zero() const;
  std::optional<PowerAsymptotic> near_infinity() const;

  bool is_catalog() const;
  const std::vector<PowerTerm>& terms() const { return terms_; }
  const Form& form() const { return form_; }

 private:
  double log_tail_value(double q) const;
  double log_tail_bar(double u) const;

  Form form_;
  std::vector<PowerTerm> terms_;
  double drift_ = 0.0;
  bool zero_ = false;
};

class CBIModel {
 public:
  CBIModel(BranchingMechanism psi, ImmigrationMechanism phi);

  const BranchingMechanism& psi() const { return psi_; }
  const ImmigrationMechanism& phi() const { return phi_; }
  double effective_drift() const { return psi_.effective_drift(); }
  double boundary() const { return boundary_; }
  bool bounded_variation() const { return psi_.effective_drift() < kInf; }

 private:
  BranchingMechanism psi_;
  ImmigrationMechanism phi_;
  double boundary_ = 0.0;
};

// Free-function surface.
inline double psi_eval(const BranchingMechanism& m, double q) { return m(q); }
inline double phi_eval(const ImmigrationMechanism& m, double q) { return m(q); }
inline double psi_prime_zero(const BranchingMechanism& m) { return m.derivative_at_zero(); }
inline double effective_drift(const BranchingMechanism& m) { return m.effective_drift(); }
inline double boundary_v(const CBIModel& model) { return model.boundary(); }
inline double q_root(const BranchingMechanism& m, double mu) { return m.root(mu); }
inline Criticality criticality(const BranchingMechanism& m) { return m.criticality(); }

// Levy density of Psi(q) = d q^alpha, alpha in (1,2), under the u<1 compensation,
// together with the linear coefficient gamma that makes the triplet exactly d q^alpha.
LevyMeasure stable_branching_measure(double d, double alpha);
double stable_branching_gamma(double d, double alpha);
// Levy density of Phi(q) = d q^beta, beta in (0,1).
LevyMeasure stable_immigration_measure(double d, double beta);

// m([u, inf))
double levy_tail(const LevyMeasure& m, double u);
// int_{[lo, hi)} x^power m(dx)
double levy_moment(const LevyMeasure& m, double lo, double hi, double power);

}  // namespace cbi
