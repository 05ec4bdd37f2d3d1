#pragma once

// Invariant functions g_{lambda,mu}, f_{lambda,mu} and the hitting-time,
// occupation, minimum and marginal transforms built from them.
//
//   g(z) = exp( int_theta^z (Phi + lambda) / (Psi - mu) ) / (Psi(z) - mu)
//   f(x) = int_{q(mu)}^inf e^{-xz} g(z) dz
//
// Every ratio f(x) / f(a) is taken from one InvariantFunction object so both
// sides share theta, the exponent table and the knot grid.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "cbi/mechanism.hpp"
#include "cbi/quad.hpp"

namespace cbi {

struct InvariantFnParams {
  double lambda = 0.0;
  double mu = 0.0;
  std::optional<double> theta;  // defaults to q(mu) + 1
};

// log f(x) with its relative error; status Diverged means f(x) = +inf.
struct LogIntegral {
  double log_value = 0.0;
  double rel_error = 0.0;
  quad::Status status = quad::Status::Converged;
  std::size_t evaluations = 0;

  bool infinite() const { return status == quad::Status::Diverged; }
  double value() const;
};

class InvariantFunction {
 public:
  InvariantFunction(const CBIModel& model, InvariantFnParams params);

  double q() const { return q_; }
  double theta() const { return theta_; }
  double lambda() const { return lambda_; }
  double mu() const { return mu_; }
  const CBIModel& model() const { return *model_; }

  // int_theta^z du / (Psi(u) - mu) and int_theta^z Phi(u) / (Psi(u) - mu) du
  double K(double z) const;
  double J_phi(double z) const;
  // int_theta^z (Phi + lambda) / (Psi - mu)
  double exponent_J(double z) const;
  double g(double z) const;
  double log_g(double z) const;

  LogIntegral log_f(double x) const;
  // (x / lambda) int_{q}^inf e^{-xz} exp(lambda K(z)) dz; needs Phi = 0, lambda > 0
  LogIntegral log_f_simplified(double x) const;

 private:
  struct Knot {
    double K = 0.0;
    double Jphi = 0.0;
  };

  double t_of(double z) const;
  // D(h) / h with D(h) = Psi(q + h) - mu
  double slope(double h) const;
  const Knot& knot(long k) const;
  Knot exponents_at(double t) const;  // (K, Jphi) at h = e^t
  Knot segment(double t0, double t1) const;

  template <class LogW>
  LogIntegral integrate_log(const LogW& logw, double lower_rate) const;

  std::shared_ptr<const CBIModel> model_;
  double lambda_, mu_, q_, theta_, t_theta_;
  double psi_prime_q_;
  mutable std::mutex mutex_;
  mutable std::map<long, Knot> knots_;
};

enum class TransformStatus { Ok, ClosedForm, PolarBoundary, Truncated, Diverged };

std::string to_string(TransformStatus s);

struct TransformValue {
  double value = 0.0;
  double abs_error = 0.0;
  TransformStatus status = TransformStatus::Ok;
};

// f_{lambda,mu}(x) as a plain value (may be +inf).
LogIntegral f_eval(const CBIModel& model, const InvariantFnParams& params, double x);
double g_eval(const CBIModel& model, const InvariantFnParams& params, double z);
double exponent_J(const CBIModel& model, const InvariantFnParams& params, double z);

// f(x) / f(a) from a shared object; a polar boundary a = v gives exactly 0.
TransformValue transform_ratio(const InvariantFunction& F, double x, double a);

TransformValue hitting_time_laplace(const CBIModel& model, double x, double a, double lambda,
                                    std::optional<double> theta = std::nullopt);
TransformValue joint_laplace(const CBIModel& model, double x, double a, double lambda, double mu,
                             std::optional<double> theta = std::nullopt);
// Phi = 0 dispatches to the closed form below.
TransformValue total_population_laplace(const CBIModel& model, double x, double a, double mu,
                                        std::optional<double> theta = std::nullopt);
// Same transform by quadrature for every Phi, including Phi = 0 (as a lambda -> 0 limit).
TransformValue total_population_quadrature(const CBIModel& model, double x, double a, double mu,
                                           std::optional<double> theta = std::nullopt);
// exp(-(x - a) q(mu)), the Phi = 0 case
TransformValue total_population_closed_form(const BranchingMechanism& psi, double x, double a, double mu);
// P_x(I <= a) for a transient model; recurrent models raise DomainError.
TransformValue minimum_cdf(const CBIModel& model, double x, double a, std::optional<double> theta = std::nullopt);
double supercritical_cb_hit_probability(const BranchingMechanism& psi, double x, double a);
// f_lambda(x) for Phi = 0 in the integrated-by-parts form.
LogIntegral cb_f_lambda_simplified(const BranchingMechanism& psi, double x, double lambda,
                                   std::optional<double> theta = std::nullopt);
// Ratio of the simplified forms at x and a.
TransformValue cb_hitting_simplified(const BranchingMechanism& psi, double x, double a, double lambda,
                                     std::optional<double> theta = std::nullopt);

struct FlowState {
  double v = 0.0;
  double accumulated_phi = 0.0;
  double t = 0.0;
  std::size_t steps = 0;
};

struct FlowOptions {
  double rtol = 1e-10;
  double atol = 1e-14;
};

// dv/dt = -Psi(v), v_0 = q, co-integrating int_0^t Phi(v_s) ds when phi is given.
FlowState v_flow(const BranchingMechanism& psi, double q, double t, const ImmigrationMechanism* phi = nullptr,
                 FlowOptions opt = {});
// E_x[exp(-q X_t)]
double marginal_laplace(const CBIModel& model, double x, double t, double q, FlowOptions opt = {});

}  // namespace cbi
