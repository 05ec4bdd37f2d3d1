#include "cbi/mechanism.hpp"

#include <algorithm>
#include <cmath>

#include "cbi/quad.hpp"

namespace cbi {

namespace {

constexpr double kRelTol = 1e-13;

// e^{-x} - 1 + x without cancellation for small x
double kfun(double x) {
  if (std::abs(x) < 1e-3) {
    return x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)));
  }
  return std::expm1(-x) + x;
}

// 1 - e^{-x}
double one_minus_exp(double x) { return -std::expm1(-x); }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double eval_terms(const std::vector<PowerTerm>& terms, double q) {
  double s = 0.0;
  for (const auto& t : terms) s += t.coefficient * (t.power == 1.0 ? q : std::pow(q, t.power));
  return s;
}

double eval_terms_derivative(const std::vector<PowerTerm>& terms, double q) {
  double s = 0.0;
  for (const auto& t : terms) {
    if (t.power == 1.0)
      s += t.coefficient;
    else
      s += t.coefficient * t.power * std::pow(q, t.power - 1.0);
  }
  return s;
}

double increment_terms(const std::vector<PowerTerm>& terms, double q, double h) {
  double s = 0.0;
  for (const auto& t : terms) {
    if (t.power == 1.0)
      s += t.coefficient * h;
    else if (q == 0.0)
      s += t.coefficient * std::pow(h, t.power);
    else
      s += t.coefficient * std::pow(q, t.power) * std::expm1(t.power * std::log1p(h / q));
  }
  return s;
}

std::optional<PowerAsymptotic> lowest_term(const std::vector<PowerTerm>& terms) {
  std::optional<PowerAsymptotic> best;
  for (const auto& t : terms) {
    if (t.coefficient == 0.0) continue;
    if (!best || t.power < best->exponent) best = PowerAsymptotic{t.coefficient, t.power, SlowFactor::None};
  }
  return best;
}

std::optional<PowerAsymptotic> highest_term(const std::vector<PowerTerm>& terms) {
  std::optional<PowerAsymptotic> best;
  for (const auto& t : terms) {
    if (t.coefficient == 0.0) continue;
    if (!best || t.power > best->exponent) best = PowerAsymptotic{t.coefficient, t.power, SlowFactor::None};
  }
  return best;
}

// int F(u) m(du), with F ~ u^{k0} near 0 (near part, u < 1) and F ~ u^{k_inf} at
// infinity (far part, u >= 1). The density part near 0 is regularised by
// u = s^{1/r}; the far part is integrated in y = log u chunk by chunk until the
// remaining power-law tail is negligible.
double integrate_measure(const LevyMeasure& m, const std::function<double(double)>& near,
                         const std::function<double(double)>& far, double k0, double k_inf) {
  double total = 0.0;
  for (const auto& a : m.atoms) total += a.mass * (a.location < 1.0 ? near(a.location) : far(a.location));
  if (!m.has_density()) return total;

  quad::Options opt;
  opt.abs_tol = 1e-300;
  opt.rel_tol = kRelTol;
  opt.max_subdivisions = 400;

  double near_part = 0.0;
  const double lo = std::max(0.0, m.lower);
  const double hi1 = std::min(m.upper, 1.0);
  if (lo < hi1) {
    if (lo == 0.0) {
      const double r = k0 - m.effective_small_exponent();
      if (!(r > 0.0)) throw DomainError("Levy measure is not integrable near 0 against this function");
      const double inv = 1.0 / r;
      auto g = [&](double s) {
        if (s <= 0.0) return 0.0;
        const double u = std::pow(s, inv);
        if (u <= 0.0) return 0.0;
        const double v = near(u) * m.density(u) * inv * u / s;
        return std::isfinite(v) ? v : 0.0;
      };
      near_part = quad::integrate_adaptive(g, 0.0, std::pow(hi1, r), opt).value;
    } else {
      auto g = [&](double u) { return near(u) * m.density(u); };
      near_part = quad::integrate_adaptive(g, lo, hi1, opt).value;
    }
  }

  double far_part = 0.0;
  const double lo2 = std::max(1.0, m.lower);
  if (lo2 < m.upper) {
    auto g = [&](double y) {
      const double u = std::exp(y);
      const double v = far(u) * m.density(u) * u;
      return std::isfinite(v) ? v : 0.0;
    };
    const double y0 = std::log(lo2);
    if (std::isfinite(m.upper)) {
      far_part = quad::integrate_adaptive(g, y0, std::log(m.upper), opt).value;
    } else {
      const double rate = std::max(m.effective_tail_exponent() - k_inf, 0.05);
      double y = y0;
      while (y < 700.0) {
        const double y1 = y + 1.0;
        far_part += quad::integrate_adaptive(g, y, y1, opt).value;
        y = y1;
        const double rem = std::abs(g(y)) / rate;
        if (rem <= 1e-15 * (std::abs(far_part) + std::abs(near_part) + std::abs(total)) || rem == 0.0) break;
      }
    }
  }
  return total + near_part + far_part;
}

// The measure restricted to [lo, hi): support clipped, atoms filtered. A density
// whose support becomes empty is dropped.
LevyMeasure restrict_measure(const LevyMeasure& m, double lo, double hi) {
  LevyMeasure r = m;
  r.atoms.clear();
  for (const auto& a : m.atoms)
    if (a.location >= lo && a.location < hi) r.atoms.push_back(a);
  r.lower = std::max(m.lower, lo);
  r.upper = std::min(m.upper, hi);
  if (!(r.lower < r.upper)) r.density_form = std::monostate{};
  return r;
}

}  // namespace

// ---------------------------------------------------------------- LevyMeasure

double LevyMeasure::density(double u) const {
  if (!(u > 0.0) || u < lower || u > upper) return 0.0;
  return std::visit(overloaded{[](std::monostate) { return 0.0; },
                               [u](const TemperedPower& t) {
                                 double v = t.scale * std::pow(u, -1.0 - t.rho);
                                 if (t.decay != 0.0) v *= std::exp(-t.decay * u);
                                 return v;
                               },
                               [u](const CustomDensity& f) { return f(u); }},
                    density_form);
}

double LevyMeasure::effective_small_exponent() const {
  if (!singular_at_zero()) return -1.0;
  if (auto t = std::get_if<TemperedPower>(&density_form)) return t->rho;
  return small_exponent;
}

double LevyMeasure::effective_tail_exponent() const {
  if (!unbounded_support()) return kInf;
  if (auto t = std::get_if<TemperedPower>(&density_form)) return t->decay > 0.0 ? kInf : t->rho;
  return tail_exponent;
}

std::string to_string(Criticality c) {
  switch (c) {
    case Criticality::Subcritical: return "Subcritical";
    case Criticality::Critical: return "Critical";
    case Criticality::Supercritical: return "Supercritical";
  }
  return "unknown";
}

LevyMeasure stable_branching_measure(double d, double alpha) {
  if (!(d > 0.0) || !(alpha > 1.0 && alpha < 2.0)) throw DomainError("stable branching measure needs d > 0, alpha in (1,2)");
  LevyMeasure m;
  m.density_form = TemperedPower{d / std::tgamma(-alpha), alpha, 0.0};
  return m;
}

double stable_branching_gamma(double d, double alpha) {
  return d / std::tgamma(-alpha) / (alpha - 1.0);
}

LevyMeasure stable_immigration_measure(double d, double beta) {
  if (!(d > 0.0) || !(beta > 0.0 && beta < 1.0)) throw DomainError("stable immigration measure needs d > 0, beta in (0,1)");
  LevyMeasure m;
  m.density_form = TemperedPower{d * beta / std::tgamma(1.0 - beta), beta, 0.0};
  return m;
}

double levy_tail(const LevyMeasure& m, double u) {
  if (!(u > 0.0)) throw DomainError("levy_tail needs u > 0");
  auto one = [](double) { return 1.0; };
  return integrate_measure(restrict_measure(m, u, kInf), one, one, 0.0, 0.0);
}

double levy_moment(const LevyMeasure& m, double lo, double hi, double power) {
  auto f = [power](double x) { return std::pow(x, power); };
  return integrate_measure(restrict_measure(m, lo, hi), f, f, power, power);
}

// ---------------------------------------------------------------- Branching

namespace {

void validate_levy_for_psi(const LevyMeasure& m) {
  for (const auto& a : m.atoms)
    if (!(a.location > 0.0) || !(a.mass >= 0.0)) throw DomainError("atoms need location > 0 and mass >= 0");
  if (!m.has_density()) return;
  if (!(m.lower < m.upper)) throw DomainError("Levy density support needs lower < upper");
  if (auto t = std::get_if<TemperedPower>(&m.density_form)) {
    if (!(t->scale >= 0.0) || !(t->decay >= 0.0)) throw DomainError("tempered density needs scale >= 0, decay >= 0");
  }
  if (m.singular_at_zero() && !(m.effective_small_exponent() < 2.0))
    throw DomainError("branching Levy measure must integrate u^2 near 0 (small exponent < 2)");
  if (m.unbounded_support() && !(m.effective_tail_exponent() > 0.0))
    throw DomainError("branching Levy measure must have a finite tail (tail exponent > 0)");
}

}  // namespace

BranchingMechanism::BranchingMechanism(Form form) : form_(std::move(form)) {
  std::visit(
      overloaded{
          [&](const psi_forms::Linear& f) {
            if (!(f.gamma > 0.0)) throw DomainError("Linear mechanism needs gamma > 0");
            terms_ = {{f.gamma, 1.0}};
            derivative_at_zero_ = f.gamma;
            effective_drift_ = f.gamma;
          },
          [&](const psi_forms::Quadratic& f) {
            if (!(f.sigma2 > 0.0)) throw DomainError("Quadratic mechanism needs sigma2 > 0");
            if (!std::isfinite(f.gamma)) throw DomainError("Quadratic mechanism needs finite gamma");
            terms_ = {{0.5 * f.sigma2, 2.0}};
            if (f.gamma != 0.0) terms_.push_back({f.gamma, 1.0});
            derivative_at_zero_ = f.gamma;
            effective_drift_ = kInf;
          },
          [&](const psi_forms::StablePower& f) {
            if (!(f.d > 0.0)) throw DomainError("StablePower mechanism needs d > 0");
            if (!(f.alpha > 1.0 && f.alpha <= 2.0)) throw DomainError("StablePower mechanism needs alpha in (1,2]");
            terms_ = {{f.d, f.alpha}};
            derivative_at_zero_ = 0.0;
            effective_drift_ = kInf;
          },
          [&](const psi_forms::Mixed& f) {
            if (!(f.sigma2 >= 0.0) || !(f.d >= 0.0)) throw DomainError("Mixed mechanism needs sigma2 >= 0, d >= 0");
            if (f.d > 0.0 && !(f.alpha > 1.0 && f.alpha <= 2.0)) throw DomainError("Mixed mechanism needs alpha in (1,2]");
            if (!std::isfinite(f.gamma)) throw DomainError("Mixed mechanism needs finite gamma");
            if (f.gamma != 0.0) terms_.push_back({f.gamma, 1.0});
            if (f.sigma2 > 0.0) terms_.push_back({0.5 * f.sigma2, 2.0});
            if (f.d > 0.0) terms_.push_back({f.d, f.alpha});
            derivative_at_zero_ = f.gamma;
            if (f.sigma2 > 0.0 || f.d > 0.0) {
              effective_drift_ = kInf;
            } else {
              if (!(f.gamma > 0.0)) throw DomainError("Mixed mechanism without curvature needs gamma > 0");
              effective_drift_ = f.gamma;
            }
          },
          [&](const psi_forms::GeneralTriplet& f) {
            if (!(f.sigma2 >= 0.0) || !std::isfinite(f.gamma)) throw DomainError("triplet needs sigma2 >= 0, finite gamma");
            validate_levy_for_psi(f.pi);
            // Psi'(0+) = gamma - int_{u>=1} u pi(du)
            const double tail_exp = f.pi.effective_tail_exponent();
            double big_mean = 0.0;
            bool big_mean_infinite = f.pi.unbounded_support() && tail_exp <= 1.0;
            for (const auto& a : f.pi.atoms)
              if (a.location >= 1.0) big_mean += a.mass * a.location;
            if (!big_mean_infinite) {
              LevyMeasure dens = f.pi;
              dens.atoms.clear();
              big_mean += integrate_measure(
                  dens, [](double) { return 0.0; }, [](double u) { return u; }, 2.0, 1.0);
            }
            derivative_at_zero_ = big_mean_infinite ? -kInf : f.gamma - big_mean;
            // effective drift
            const bool unbounded_variation =
                f.sigma2 > 0.0 || (f.pi.singular_at_zero() && f.pi.effective_small_exponent() >= 1.0);
            if (unbounded_variation) {
              effective_drift_ = kInf;
            } else {
              const double small_mean = integrate_measure(
                  f.pi, [](double u) { return u; }, [](double) { return 0.0; }, 1.0, 0.0);
              effective_drift_ = f.gamma + small_mean;
              if (!(effective_drift_ > 0.0))
                throw DomainError("triplet has non-positive effective drift; Psi would never be positive");
            }
          }},
      form_);

  if (std::isinf(derivative_at_zero_)) {
    criticality_ = Criticality::Supercritical;
  } else {
    double scale = std::abs(derivative_at_zero_);
    if (auto t = std::get_if<psi_forms::GeneralTriplet>(&form_)) scale = std::abs(t->gamma) + std::abs(t->gamma - derivative_at_zero_);
    const double tol = is_catalog() ? 0.0 : 1e-9 * scale;
    if (derivative_at_zero_ > tol)
      criticality_ = Criticality::Subcritical;
    else if (derivative_at_zero_ < -tol)
      criticality_ = Criticality::Supercritical;
    else
      criticality_ = Criticality::Critical;
  }
}

const LevyMeasure* BranchingMechanism::levy_measure() const {
  if (auto t = std::get_if<psi_forms::GeneralTriplet>(&form_)) return &t->pi;
  return nullptr;
}

double BranchingMechanism::sigma2() const {
  return std::visit(overloaded{[](const psi_forms::Linear&) { return 0.0; },
                               [](const psi_forms::Quadratic& f) { return f.sigma2; },
                               [](const psi_forms::StablePower& f) { return f.alpha == 2.0 ? 2.0 * f.d : 0.0; },
                               [](const psi_forms::Mixed& f) { return f.sigma2 + (f.d > 0.0 && f.alpha == 2.0 ? 2.0 * f.d : 0.0); },
                               [](const psi_forms::GeneralTriplet& f) { return f.sigma2; }},
                    form_);
}

double BranchingMechanism::gamma() const {
  return std::visit(overloaded{[](const psi_forms::Linear& f) { return f.gamma; },
                               [](const psi_forms::Quadratic& f) { return f.gamma; },
                               [](const psi_forms::StablePower&) { return 0.0; },
                               [](const psi_forms::Mixed& f) { return f.gamma; },
                               [](const psi_forms::GeneralTriplet& f) { return f.gamma; }},
                    form_);
}

double BranchingMechanism::diffusion_coefficient() const { return sigma2(); }

double BranchingMechanism::triplet_increment(double q, double h) const {
  const auto& f = std::get<psi_forms::GeneralTriplet>(form_);
  double base = f.gamma * h + 0.5 * f.sigma2 * h * (2.0 * q + h);
  if (f.pi.empty() || h == 0.0) return base;
  auto near = [q, h](double u) { return std::exp(-q * u) * kfun(h * u) + h * u * one_minus_exp(q * u); };
  auto far = [q, h](double u) { return std::exp(-q * u) * std::expm1(-h * u); };
  return base + integrate_measure(f.pi, near, far, 2.0, 0.0);
}

double BranchingMechanism::triplet_value(double q) const { return triplet_increment(0.0, q); }

double BranchingMechanism::triplet_derivative(double q) const {
  const auto& f = std::get<psi_forms::GeneralTriplet>(form_);
  if (q == 0.0) return derivative_at_zero_;
  double base = f.gamma + f.sigma2 * q;
  if (f.pi.empty()) return base;
  auto near = [q](double u) { return u * one_minus_exp(q * u); };
  auto far = [q](double u) { return -u * std::exp(-q * u); };
  return base + integrate_measure(f.pi, near, far, 2.0, 1.0);
}

double BranchingMechanism::operator()(double q) const {
  if (is_catalog()) return eval_terms(terms_, q);
  return triplet_value(q);
}

double BranchingMechanism::derivative(double q) const {
  if (is_catalog()) return eval_terms_derivative(terms_, q);
  return triplet_derivative(q);
}

double BranchingMechanism::increment(double q, double h) const {
  if (is_catalog()) return increment_terms(terms_, q, h);
  return triplet_increment(q, h);
}

double BranchingMechanism::increment_ratio(double q, double h) const {
  if (!is_catalog()) return triplet_increment(q, h) / h;
  double s = 0.0;
  for (const auto& t : terms_) {
    if (t.power == 1.0)
      s += t.coefficient;
    else if (q == 0.0)
      s += t.coefficient * std::pow(h, t.power - 1.0);
    else
      s += t.coefficient * std::pow(q, t.power) * std::expm1(t.power * std::log1p(h / q)) / h;
  }
  return s;
}

double BranchingMechanism::minimizer() const {
  double hi = 1.0;
  int guard = 0;
  while (derivative(hi) <= 0.0) {
    hi *= 2.0;
    if (++guard > 1000) throw NumericError("could not bracket the minimizer of Psi");
  }
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (derivative(mid) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

double BranchingMechanism::root(double mu) const {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("q_root needs finite mu >= 0");
  const bool super = criticality_ == Criticality::Supercritical;
  if (mu == 0.0 && !super) return 0.0;
  double lo = super ? minimizer() : 0.0;
  double hi = std::max(1.0, 2.0 * lo);
  int guard = 0;
  while ((*this)(hi) <= mu) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 1100) throw NumericError("could not bracket q(mu)");
  }
  for (int i = 0; i < 300 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((*this)(mid) > mu)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

std::optional<PowerAsymptotic> BranchingMechanism::near_zero() const {
  if (is_catalog()) return lowest_term(terms_);
  if (criticality_ == Criticality::Subcritical) return PowerAsymptotic{derivative_at_zero_, 1.0, SlowFactor::None};
  return std::nullopt;
}

std::optional<PowerAsymptotic> BranchingMechanism::near_infinity() const {
  if (is_catalog()) return highest_term(terms_);
  const auto& f = std::get<psi_forms::GeneralTriplet>(form_);
  if (f.sigma2 > 0.0) return PowerAsymptotic{0.5 * f.sigma2, 2.0, SlowFactor::None};
  if (effective_drift_ < kInf) return PowerAsymptotic{effective_drift_, 1.0, SlowFactor::None};
  if (auto t = std::get_if<TemperedPower>(&f.pi.density_form)) {
    const double rho = t->rho;
    if (rho > 1.0 && rho < 2.0) return PowerAsymptotic{t->scale * std::tgamma(-rho), rho, SlowFactor::None};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- Immigration

namespace {

void validate_levy_for_phi(const LevyMeasure& m) {
  for (const auto& a : m.atoms)
    if (!(a.location > 0.0) || !(a.mass >= 0.0)) throw DomainError("atoms need location > 0 and mass >= 0");
  if (!m.has_density()) return;
  if (!(m.lower < m.upper)) throw DomainError("Levy density support needs lower < upper");
  if (auto t = std::get_if<TemperedPower>(&m.density_form)) {
    if (!(t->scale >= 0.0) || !(t->decay >= 0.0)) throw DomainError("tempered density needs scale >= 0, decay >= 0");
  }
  if (m.singular_at_zero() && !(m.effective_small_exponent() < 1.0))
    throw DomainError("immigration Levy measure must integrate u near 0 (small exponent < 1)");
  if (m.unbounded_support() && !(m.effective_tail_exponent() > 0.0))
    throw DomainError("immigration Levy measure must have a finite tail (tail exponent > 0)");
}

double log_tail_bar_at(const phi_forms::LogTailPreset& p, double u) {
  u = std::max(u, 100.0);
  const double L = std::log(u);
  if (p.kind == LogTailKind::InverseLog) return p.alpha / L;
  return 1.0 / (L * std::log(L));
}

}  // namespace

ImmigrationMechanism::ImmigrationMechanism(Form form) : form_(std::move(form)) {
  std::visit(overloaded{
                 [&](const phi_forms::LinearDrift& f) {
                   if (!(f.b >= 0.0) || !std::isfinite(f.b)) throw DomainError("LinearDrift needs finite b >= 0");
                   terms_ = {{f.b, 1.0}};
                   drift_ = f.b;
                   zero_ = f.b == 0.0;
                 },
                 [&](const phi_forms::StablePower& f) {
                   if (!(f.d > 0.0)) throw DomainError("StablePower immigration needs d' > 0");
                   if (!(f.beta > 0.0 && f.beta < 1.0)) throw DomainError("StablePower immigration needs beta in (0,1)");
                   terms_ = {{f.d, f.beta}};
                 },
                 [&](const phi_forms::DerivedFromPsi& f) {
                   if (std::isinf(f.psi.derivative_at_zero()))
                     throw DomainError("Phi = Psi' - Psi'(0+) needs Psi'(0+) finite");
                   if (f.psi.is_catalog()) {
                     for (const auto& t : f.psi.terms())
                       if (t.power != 1.0) terms_.push_back({t.coefficient * t.power, t.power - 1.0});
                   }
                   drift_ = f.psi.sigma2();
                 },
                 [&](const phi_forms::GeneralTriplet& f) {
                   if (!(f.b >= 0.0) || !std::isfinite(f.b)) throw DomainError("immigration triplet needs finite b >= 0");
                   validate_levy_for_phi(f.nu);
                   drift_ = f.b;
                   zero_ = f.b == 0.0 && f.nu.empty();
                 },
                 [&](const phi_forms::LogTailPreset& f) {
                   if (!(f.alpha > 0.0)) throw DomainError("log-tail preset needs alpha > 0");
                 }},
             form_);
}

bool ImmigrationMechanism::is_catalog() const {
  if (std::holds_alternative<phi_forms::LinearDrift>(form_) || std::holds_alternative<phi_forms::StablePower>(form_))
    return true;
  if (auto d = std::get_if<phi_forms::DerivedFromPsi>(&form_)) return d->psi.is_catalog();
  return false;
}

double ImmigrationMechanism::log_tail_bar(double u) const {
  return log_tail_bar_at(std::get<phi_forms::LogTailPreset>(form_), u);
}

// Phi(q) = q int_0^inf e^{-qu} nubar(u) du with nubar constant below 100; the part
// above 100 is rewritten with u = 100 + w / q so the integrand is e^{-w} times a
// slowly varying factor.
double ImmigrationMechanism::log_tail_value(double q) const {
  if (q == 0.0) return 0.0;
  const double head = log_tail_bar(100.0) * one_minus_exp(100.0 * q);
  auto g = [&](double w) { return std::exp(-w) * log_tail_bar(100.0 + w / q); };
  quad::Options opt;
  opt.abs_tol = 1e-300;
  opt.rel_tol = kRelTol;
  opt.breakpoints = {1.0, 4.0, 12.0};
  const double body = quad::integrate_adaptive(g, 0.0, 60.0, opt).value;
  return head + std::exp(-100.0 * q) * body;
}

double ImmigrationMechanism::operator()(double q) const {
  if (is_catalog()) return eval_terms(terms_, q);
  return std::visit(overloaded{[&](const phi_forms::DerivedFromPsi& f) {
                                 const auto& t = std::get<psi_forms::GeneralTriplet>(f.psi.form());
                                 double v = t.sigma2 * q;
                                 if (t.pi.empty()) return v;
                                 auto g = [q](double u) { return u * one_minus_exp(q * u); };
                                 return v + integrate_measure(t.pi, g, g, 2.0, 1.0);
                               },
                               [&](const phi_forms::GeneralTriplet& f) {
                                 double v = f.b * q;
                                 if (f.nu.empty()) return v;
                                 auto g = [q](double u) { return one_minus_exp(q * u); };
                                 return v + integrate_measure(f.nu, g, g, 1.0, 0.0);
                               },
                               [&](const phi_forms::LogTailPreset&) { return log_tail_value(q); },
                               [&](const auto&) { return eval_terms(terms_, q); }},
                    form_);
}

double ImmigrationMechanism::derivative(double q) const {
  if (is_catalog()) return eval_terms_derivative(terms_, q);
  const double h = 1e-5 * std::max(q, 1e-3);
  const double lo = std::max(0.0, q - h);
  return ((*this)(q + h) - (*this)(lo)) / (q + h - lo);
}

double ImmigrationMechanism::tail_mass(double u) const {
  if (!(u > 0.0)) throw DomainError("tail_mass needs u > 0");
  return std::visit(
      overloaded{[&](const phi_forms::LinearDrift&) { return 0.0; },
                 [&](const phi_forms::StablePower& f) {
                   // nu(du) = d beta / Gamma(1 - beta) u^{-1-beta} du
                   return f.d / std::tgamma(1.0 - f.beta) * std::pow(u, -f.beta);
                 },
                 [&](const phi_forms::DerivedFromPsi& f) {
                   if (!f.psi.is_catalog()) {
                     const auto& t = std::get<psi_forms::GeneralTriplet>(f.psi.form());
                     auto g = [](double x) { return x; };
                     return integrate_measure(restrict_measure(t.pi, u, kInf), g, g, 1.0, 1.0);
                   }
                   double s = 0.0;
                   for (const auto& t : f.psi.terms())
                     if (t.power > 1.0 && t.power < 2.0) {
                       // u pi(du), pi(du) = C u^{-1-alpha} du, C = d / Gamma(-alpha)
                       const double C = t.coefficient / std::tgamma(-t.power);
                       s += C * std::pow(u, 1.0 - t.power) / (t.power - 1.0);
                     }
                   return s;
                 },
                 [&](const phi_forms::GeneralTriplet& f) {
                   double s = 0.0;
                   for (const auto& a : f.nu.atoms)
                     if (a.location >= u) s += a.mass;
                   if (!f.nu.has_density()) return s;
                   if (auto t = std::get_if<TemperedPower>(&f.nu.density_form); t && t->decay == 0.0 && t->rho != 0.0) {
                     const double lo = std::max(u, f.nu.lower);
                     if (lo >= f.nu.upper) return s;
                     const double hi_term = std::isfinite(f.nu.upper) ? std::pow(f.nu.upper, -t->rho) : 0.0;
                     return s + t->scale * (std::pow(lo, -t->rho) - hi_term) / t->rho;
                   }
                   LevyMeasure dens = restrict_measure(f.nu, u, kInf);
                   dens.atoms.clear();
                   if (!dens.has_density()) return s;
                   return s + integrate_measure(
                                  dens, [](double) { return 1.0; }, [](double) { return 1.0; }, 0.0, 0.0);
                 },
                 [&](const phi_forms::LogTailPreset&) { return log_tail_bar(u); }},
      form_);
}

double ImmigrationMechanism::small_jump_mean(double eps) const {
  if (!(eps > 0.0)) throw DomainError("small_jump_mean needs eps > 0");
  return std::visit(
      overloaded{[&](const phi_forms::LinearDrift&) { return 0.0; },
                 [&](const phi_forms::StablePower& f) {
                   const double C = f.d * f.beta / std::tgamma(1.0 - f.beta);
                   return C * std::pow(eps, 1.0 - f.beta) / (1.0 - f.beta);
                 },
                 [&](const phi_forms::DerivedFromPsi& f) {
                   if (!f.psi.is_catalog()) {
                     const auto& t = std::get<psi_forms::GeneralTriplet>(f.psi.form());
                     auto g = [](double x) { return x * x; };
                     return integrate_measure(restrict_measure(t.pi, 0.0, eps), g, g, 2.0, 2.0);
                   }
                   double s = 0.0;
                   for (const auto& t : f.psi.terms())
                     if (t.power > 1.0 && t.power < 2.0) {
                       const double C = t.coefficient / std::tgamma(-t.power);
                       s += C * std::pow(eps, 2.0 - t.power) / (2.0 - t.power);
                     }
                   return s;
                 },
                 [&](const phi_forms::GeneralTriplet& f) {
                   double s = 0.0;
                   for (const auto& a : f.nu.atoms)
                     if (a.location < eps) s += a.mass * a.location;
                   if (!f.nu.has_density() || f.nu.lower >= eps) return s;
                   LevyMeasure dens = restrict_measure(f.nu, 0.0, eps);
                   dens.atoms.clear();
                   if (!dens.has_density()) return s;
                   return s + integrate_measure(
                                  dens, [](double x) { return x; }, [](double x) { return x; }, 1.0, 1.0);
                 },
                 [&](const phi_forms::LogTailPreset&) { return 0.0; }},
      form_);
}

double ImmigrationMechanism::log_moment() const {
  return std::visit(overloaded{[&](const phi_forms::LinearDrift&) { return 0.0; },
                               [&](const phi_forms::StablePower& f) {
                                 // int_1^inf log u C u^{-1-beta} du = C / beta^2
                                 const double C = f.d * f.beta / std::tgamma(1.0 - f.beta);
                                 return C / (f.beta * f.beta);
                               },
                               [&](const phi_forms::DerivedFromPsi& f) {
                                 if (f.psi.is_catalog()) {
                                   double s = 0.0;
                                   for (const auto& t : f.psi.terms())
                                     if (t.power > 1.0 && t.power < 2.0) {
                                       const double C = t.coefficient / std::tgamma(-t.power);
                                       const double e = t.power - 1.0;
                                       s += C / (e * e);
                                     }
                                   return s;
                                 }
                                 const auto& t = std::get<psi_forms::GeneralTriplet>(f.psi.form());
                                 auto g = [](double x) { return x >= 1.0 ? x * std::log(x) : 0.0; };
                                 return integrate_measure(t.pi, g, g, 2.0, 1.2);
                               },
                               [&](const phi_forms::GeneralTriplet& f) {
                                 if (f.nu.unbounded_support() && !(f.nu.effective_tail_exponent() > 0.0)) return kInf;
                                 auto g = [](double x) { return x >= 1.0 ? std::log(x) : 0.0; };
                                 return integrate_measure(f.nu, g, g, 1.0, 0.2);
                               },
                               [&](const phi_forms::LogTailPreset&) { return kInf; }},
                    form_);
}

std::optional<PowerAsymptotic> ImmigrationMechanism::near_zero() const {
  if (zero_) return std::nullopt;
  if (is_catalog()) return lowest_term(terms_);
  if (auto p = std::get_if<phi_forms::LogTailPreset>(&form_)) {
    if (p->kind == LogTailKind::InverseLog) return PowerAsymptotic{p->alpha, 0.0, SlowFactor::InverseLog};
    return PowerAsymptotic{1.0, 0.0, SlowFactor::InverseLogLog};
  }
  if (auto d = std::get_if<phi_forms::DerivedFromPsi>(&form_)) {
    // Phi'(0+) = sigma^2 + int u^2 pi(du), finite when the tail of pi integrates u^2
    const auto& t = std::get<psi_forms::GeneralTriplet>(d->psi.form());
    if (t.pi.unbounded_support() && !(t.pi.effective_tail_exponent() > 2.0)) return std::nullopt;
    auto sq = [](double x) { return x * x; };
    const double slope = t.sigma2 + (t.pi.empty() ? 0.0 : integrate_measure(t.pi, sq, sq, 2.0, 2.0));
    return PowerAsymptotic{slope, 1.0, SlowFactor::None};
  }
  const auto& f = std::get<phi_forms::GeneralTriplet>(form_);
  const double tail = f.nu.effective_tail_exponent();
  if (f.nu.unbounded_support() && tail <= 1.0) {
    if (f.b == 0.0 && f.nu.atoms.empty()) {
      if (auto t = std::get_if<TemperedPower>(&f.nu.density_form); t && t->decay == 0.0 && f.nu.lower <= 0.0 &&
                                                                    t->rho < 1.0 && t->rho > 0.0)
        return PowerAsymptotic{t->scale * std::tgamma(1.0 - t->rho) / t->rho, t->rho, SlowFactor::None};
    }
    return std::nullopt;
  }
  // finite mean: Phi ~ Phi'(0) q
  double mean = f.b;
  auto g = [](double x) { return x; };
  if (!f.nu.empty()) mean += integrate_measure(f.nu, g, g, 1.0, 1.0);
  return PowerAsymptotic{mean, 1.0, SlowFactor::None};
}

std::optional<PowerAsymptotic> ImmigrationMechanism::near_infinity() const {
  if (zero_) return std::nullopt;
  if (is_catalog()) return highest_term(terms_);
  if (std::holds_alternative<phi_forms::LogTailPreset>(form_))
    return PowerAsymptotic{log_tail_bar(100.0), 0.0, SlowFactor::None};
  if (auto d = std::get_if<phi_forms::DerivedFromPsi>(&form_)) {
    const auto& t = std::get<psi_forms::GeneralTriplet>(d->psi.form());
    if (t.sigma2 > 0.0) return PowerAsymptotic{t.sigma2, 1.0, SlowFactor::None};
    return std::nullopt;
  }
  const auto& f = std::get<phi_forms::GeneralTriplet>(form_);
  if (f.b > 0.0) return PowerAsymptotic{f.b, 1.0, SlowFactor::None};
  if (f.nu.singular_at_zero()) {
    const double rho = f.nu.effective_small_exponent();
    if (auto t = std::get_if<TemperedPower>(&f.nu.density_form); t && rho > 0.0)
      return PowerAsymptotic{t->scale * std::tgamma(1.0 - rho) / rho, rho, SlowFactor::None};
    if (rho > 0.0) return std::nullopt;
  }
  // finite total mass
  auto one = [](double) { return 1.0; };
  return PowerAsymptotic{integrate_measure(f.nu, one, one, 0.0, 0.0), 0.0, SlowFactor::None};
}

// ---------------------------------------------------------------- Model

CBIModel::CBIModel(BranchingMechanism psi, ImmigrationMechanism phi) : psi_(std::move(psi)), phi_(std::move(phi)) {
  const double d = psi_.effective_drift();
  if (!(d > 0.0)) throw DomainError("effective drift must be positive");
  boundary_ = std::isinf(d) ? 0.0 : phi_.drift() / d;
}

}  // namespace cbi
