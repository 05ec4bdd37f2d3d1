#pragma once

// Adaptive Gauss-Kronrod quadrature plus the substitutions needed for the
// improper integrals of the transform and classify modules.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace cbi::quad {

enum class Status { Converged, Truncated, Diverged, Inconclusive };

std::string to_string(Status s);

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;
  Status status = Status::Converged;
  std::size_t evaluations = 0;

  bool ok() const { return status == Status::Converged || status == Status::Truncated; }
};

using Integrand = std::function<double(double)>;

struct Options {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  std::size_t max_subdivisions = 2000;
  // Interior points where the integrand may be non-smooth; sorted internally.
  std::vector<double> breakpoints;
};

// Local behaviour of an integrand near an endpoint.
enum class SingularityType { None, PowerLaw, EssentialDecay };

struct SingularityHint {
  double location = 0.0;
  SingularityType type = SingularityType::None;
  double exponent = 1.0;  // PowerLaw: f ~ (z - location)^{exponent - 1}
};

// One 15-point Kronrod panel with the embedded 7-point Gauss estimate.
QuadratureResult gauss_kronrod_15(const Integrand& f, double a, double b);

QuadratureResult integrate_adaptive(const Integrand& f, double a, double b, double tol);
QuadratureResult integrate_adaptive(const Integrand& f, double a, double b, const Options& opt);

// f(z) ~ C (z - a)^{rho - 1} near a. Substitutes z = a + s^{1/rho}. When b is
// infinite, the part beyond a + 1 is handed to integrate_decaying_tail with
// the given tail_rate (which must then be positive).
QuadratureResult integrate_power_singular(const Integrand& f, double a, double b, double rho, double tol,
                                          double tail_rate = 0.0);

// |f(z)| <= K exp(-rate z) for large z. K is estimated from samples and the
// range is truncated where the bound's remaining mass drops below tol / 2.
QuadratureResult integrate_decaying_tail(const Integrand& f, double a, double rate, double tol);

enum class Side { FromAbove, FromBelow };

struct ProbeResult {
  enum class Kind { ConvergesTo, Diverges, Inconclusive };
  Kind kind = Kind::Inconclusive;
  double value = 0.0;  // partial integral plus geometric extrapolation, ConvergesTo only
  std::vector<double> window_sums;
};

std::string to_string(ProbeResult::Kind k);

// Integrates f over the dyadic windows [e + 2^{-(k+1)} span, e + 2^{-k} span]
// (mirrored for FromBelow), k = 0..window_count-1, and decides from the
// contraction ratio of the last 16 window sums.
ProbeResult divergence_probe(const Integrand& f, double endpoint, Side side, double span = 1.0,
                             int window_count = 48);

}  // namespace cbi::quad
