#include "cbi/transform.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cbi/classify.hpp"

namespace cbi {

namespace {

constexpr double kTopT = 300.0;     // largest log(z - q) scanned
constexpr double kFloorT = -700.0;  // smallest log(z - q) scanned
constexpr double kDrop = 46.0;      // log-mass drop treated as negligible
constexpr double kFlatSlope = 1e-8;

quad::Options segment_options() {
  quad::Options opt;
  opt.abs_tol = 1e-300;
  opt.rel_tol = 5e-14;  // just above the 50 eps roundoff floor of one panel
  opt.max_subdivisions = 200;
  return opt;
}

}  // namespace

double LogIntegral::value() const {
  if (infinite()) return kInf;
  return std::exp(log_value);
}

std::string to_string(TransformStatus s) {
  switch (s) {
    case TransformStatus::Ok: return "ok";
    case TransformStatus::ClosedForm: return "closed_form";
    case TransformStatus::PolarBoundary: return "polar_boundary";
    case TransformStatus::Truncated: return "truncated";
    case TransformStatus::Diverged: return "diverged";
  }
  return "unknown";
}

InvariantFunction::InvariantFunction(const CBIModel& model, InvariantFnParams params)
    : model_(std::make_shared<const CBIModel>(model)), lambda_(params.lambda), mu_(params.mu) {
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) throw DomainError("lambda must be finite and >= 0");
  if (!(mu_ >= 0.0) || !std::isfinite(mu_)) throw DomainError("mu must be finite and >= 0");
  q_ = model_->psi().root(mu_);
  theta_ = params.theta.value_or(q_ + 1.0);
  if (!(theta_ > q_)) throw DomainError("theta must exceed q(mu)");
  t_theta_ = std::log(theta_ - q_);
  psi_prime_q_ = model_->psi().derivative(q_);
  knots_[0] = Knot{};
}

double InvariantFunction::t_of(double z) const {
  if (!(z > q_)) throw DomainError("invariant function evaluated at z <= q(mu)");
  return std::log(z - q_);
}

double InvariantFunction::slope(double h) const { return model_->psi().increment_ratio(q_, h); }

InvariantFunction::Knot InvariantFunction::segment(double t0, double t1) const {
  Knot out;
  if (t0 == t1) return out;
  const auto opt = segment_options();
  auto k_int = [&](double t) { return 1.0 / slope(std::exp(t)); };
  out.K = quad::integrate_adaptive(k_int, std::min(t0, t1), std::max(t0, t1), opt).value;
  if (!model_->phi().is_zero()) {
    auto j_int = [&](double t) {
      const double h = std::exp(t);
      return model_->phi()(q_ + h) / slope(h);
    };
    out.Jphi = quad::integrate_adaptive(j_int, std::min(t0, t1), std::max(t0, t1), opt).value;
  }
  if (t1 < t0) {
    out.K = -out.K;
    out.Jphi = -out.Jphi;
  }
  return out;
}

const InvariantFunction::Knot& InvariantFunction::knot(long k) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = knots_.find(k);
  if (it != knots_.end()) return it->second;
  if (k > 0) {
    long j = knots_.rbegin()->first;
    while (j < k) {
      const Knot& prev = knots_.at(j);
      const Knot s = segment(t_theta_ + j, t_theta_ + j + 1);
      knots_[j + 1] = Knot{prev.K + s.K, prev.Jphi + s.Jphi};
      ++j;
    }
  } else {
    long j = knots_.begin()->first;
    while (j > k) {
      const Knot& prev = knots_.at(j);
      const Knot s = segment(t_theta_ + j, t_theta_ + j - 1);
      knots_[j - 1] = Knot{prev.K + s.K, prev.Jphi + s.Jphi};
      --j;
    }
  }
  return knots_.at(k);
}

InvariantFunction::Knot InvariantFunction::exponents_at(double t) const {
  const long k = static_cast<long>(std::floor(t - t_theta_));
  const Knot& base = knot(k);
  const Knot rest = segment(t_theta_ + k, t);
  return Knot{base.K + rest.K, base.Jphi + rest.Jphi};
}

double InvariantFunction::K(double z) const { return exponents_at(t_of(z)).K; }
double InvariantFunction::J_phi(double z) const { return exponents_at(t_of(z)).Jphi; }

double InvariantFunction::exponent_J(double z) const {
  const Knot e = exponents_at(t_of(z));
  return lambda_ * e.K + e.Jphi;
}

double InvariantFunction::log_g(double z) const {
  const double t = t_of(z);
  const Knot e = exponents_at(t);
  const double h = std::exp(t);
  return lambda_ * e.K + e.Jphi - t - std::log(slope(h));
}

double InvariantFunction::g(double z) const { return std::exp(log_g(z)); }

// Integrates exp(logw(s)) over the real line. The knot grid t_theta + k brackets
// the mass: scanning stops once the log-integrand is kDrop below its maximum and
// still falling. A tail cut by the scan limits is extrapolated as an exponential,
// using lower_rate (if positive) as the exact decay rate at -infinity.
template <class LogW>
LogIntegral InvariantFunction::integrate_log(const LogW& logw, double lower_rate) const {
  LogIntegral out;
  std::size_t evals = 0;
  auto lw = [&](double s) {
    ++evals;
    const double v = logw(s);
    if (std::isnan(v)) throw NumericError("invariant function: NaN integrand at log(z-q) = " + std::to_string(s));
    return v;
  };

  const double l0 = lw(t_theta_);
  double M = l0;
  // upward
  long khi = 0;
  double prev = l0, last = l0, hi_slope = 0.0;
  bool capped_hi = false;
  for (long k = 1;; ++k) {
    const double t = t_theta_ + k;
    if (t > kTopT) {
      capped_hi = true;
      hi_slope = last - prev;
      break;
    }
    const double v = lw(t);
    M = std::max(M, v);
    prev = last;
    last = v;
    khi = k;
    if (v < M - kDrop && v < prev) {
      hi_slope = v - prev;
      break;
    }
  }
  const double l_hi = last;
  // downward
  long klo = 0;
  prev = l0;
  last = l0;
  double lo_slope = 0.0;
  bool capped_lo = false;
  for (long k = -1;; --k) {
    const double t = t_theta_ + k;
    if (t < kFloorT) {
      capped_lo = true;
      lo_slope = last - prev;  // log W(t_k) - log W(t_k + 1) < 0 when decaying
      lo_slope = -lo_slope;
      break;
    }
    const double v = lw(t);
    M = std::max(M, v);
    prev = last;
    last = v;
    klo = k;
    if (v < M - kDrop && v < prev) {
      lo_slope = prev - v;
      break;
    }
  }
  const double l_lo = last;

  if (capped_hi && !(hi_slope < -kFlatSlope)) {
    out.status = quad::Status::Diverged;
    out.log_value = kInf;
    out.evaluations = evals;
    return out;
  }
  double lo_rate = lo_slope;
  if (capped_lo) {
    if (lower_rate > 0.0) lo_rate = lower_rate;
    else if (!(lo_rate > kFlatSlope)) {
      out.status = quad::Status::Diverged;
      out.log_value = kInf;
      out.evaluations = evals;
      return out;
    }
  }

  const double s_lo = t_theta_ + klo, s_hi = t_theta_ + khi;
  quad::Options opt;
  opt.abs_tol = 1e-300;
  opt.rel_tol = 1e-13;
  opt.max_subdivisions = 4000;
  for (long k = klo + 1; k < khi; ++k) opt.breakpoints.push_back(t_theta_ + k);
  auto body = quad::integrate_adaptive([&](double s) { return std::exp(lw(s) - M); }, s_lo, s_hi, opt);

  const double w_hi = std::exp(l_hi - M), w_lo = std::exp(l_lo - M);
  const double tail_hi = w_hi / std::max(-hi_slope, kFlatSlope);
  const double tail_lo = w_lo / (capped_lo && lower_rate > 0.0 ? lower_rate : std::max(lo_rate, kFlatSlope));
  double total = body.value, err = body.abs_error;
  if (capped_hi) {
    total += tail_hi;
    err += tail_hi;
  } else {
    err += tail_hi;
  }
  if (capped_lo) {
    total += tail_lo;
    err += lower_rate > 0.0 ? 1e-10 * tail_lo : tail_lo;
  } else {
    err += tail_lo;
  }
  out.log_value = M + std::log(total);
  out.rel_error = err / total;
  out.evaluations = evals;
  if (!body.ok())
    out.status = quad::Status::Inconclusive;
  else if (out.rel_error > 1e-8)
    out.status = quad::Status::Truncated;
  else
    out.status = quad::Status::Converged;
  return out;
}

LogIntegral InvariantFunction::log_f(double x) const {
  const double v = model_->boundary();
  if (x < v && !(std::abs(x - v) <= 1e-15 * std::max(1.0, v)))
    throw DomainError("f_eval needs x >= v (boundary point)");
  if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("f_eval needs finite x >= 0");
  const bool phi_zero = model_->phi().is_zero();
  auto logw = [&](double s) {
    const Knot e = exponents_at(s);
    const double h = std::exp(s);
    return -x * h + lambda_ * e.K + (phi_zero ? 0.0 : e.Jphi) - std::log(slope(h));
  };
  double rho = 0.0;
  if (psi_prime_q_ > 0.0) rho = (model_->phi()(q_) + lambda_) / psi_prime_q_;
  LogIntegral r = integrate_log(logw, rho);
  if (!r.infinite()) r.log_value += -x * q_;
  return r;
}

LogIntegral InvariantFunction::log_f_simplified(double x) const {
  if (!model_->phi().is_zero()) throw DomainError("simplified form needs Phi = 0");
  if (!(lambda_ > 0.0)) throw DomainError("simplified form needs lambda > 0");
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("simplified form needs finite x > 0");
  auto logw = [&](double s) {
    const Knot e = exponents_at(s);
    return -x * std::exp(s) + lambda_ * e.K + s;
  };
  const double rate = psi_prime_q_ > 0.0 ? 1.0 + lambda_ / psi_prime_q_ : 0.0;
  LogIntegral r = integrate_log(logw, rate);
  if (!r.infinite()) r.log_value += -x * q_ + std::log(x / lambda_);
  return r;
}

LogIntegral f_eval(const CBIModel& model, const InvariantFnParams& params, double x) {
  return InvariantFunction(model, params).log_f(x);
}

double g_eval(const CBIModel& model, const InvariantFnParams& params, double z) {
  return InvariantFunction(model, params).g(z);
}

double exponent_J(const CBIModel& model, const InvariantFnParams& params, double z) {
  return InvariantFunction(model, params).exponent_J(z);
}

namespace {

void check_order(const CBIModel& model, double x, double a) {
  if (!std::isfinite(x) || !std::isfinite(a)) throw DomainError("x and a must be finite");
  if (!(x > a)) throw DomainError("transform needs x > a");
  const double v = model.boundary();
  if (a < v && !(std::abs(a - v) <= 1e-15 * std::max(1.0, v))) throw DomainError("transform needs a >= v");
}

TransformValue ratio_of(const LogIntegral& fx, const LogIntegral& fa, double a, double v) {
  TransformValue out;
  if (fa.infinite()) {
    if (std::abs(a - v) <= 1e-15 * std::max(1.0, v)) {
      out.value = 0.0;
      out.status = TransformStatus::PolarBoundary;
      return out;
    }
    out.value = std::nan("");
    out.status = TransformStatus::Diverged;
    return out;
  }
  if (fx.infinite()) {
    out.value = std::nan("");
    out.status = TransformStatus::Diverged;
    return out;
  }
  const double r = std::exp(fx.log_value - fa.log_value);
  out.value = std::clamp(r, 0.0, 1.0);
  out.abs_error = out.value * (fx.rel_error + fa.rel_error) + std::max(0.0, r - 1.0);
  const bool truncated = fx.status != quad::Status::Converged || fa.status != quad::Status::Converged;
  out.status = truncated ? TransformStatus::Truncated : TransformStatus::Ok;
  return out;
}

}  // namespace

TransformValue transform_ratio(const InvariantFunction& F, double x, double a) {
  check_order(F.model(), x, a);
  const auto fa = F.log_f(a);
  if (fa.infinite()) return ratio_of(LogIntegral{}, fa, a, F.model().boundary());
  return ratio_of(F.log_f(x), fa, a, F.model().boundary());
}

TransformValue hitting_time_laplace(const CBIModel& model, double x, double a, double lambda,
                                    std::optional<double> theta) {
  if (!(lambda > 0.0)) throw DomainError("hitting_time_laplace needs lambda > 0");
  check_order(model, x, a);
  InvariantFunction F(model, {lambda, 0.0, theta});
  return transform_ratio(F, x, a);
}

TransformValue joint_laplace(const CBIModel& model, double x, double a, double lambda, double mu,
                             std::optional<double> theta) {
  if (!(lambda > 0.0)) throw DomainError("joint_laplace needs lambda > 0");
  if (!(mu >= 0.0)) throw DomainError("joint_laplace needs mu >= 0");
  check_order(model, x, a);
  InvariantFunction F(model, {lambda, mu, theta});
  return transform_ratio(F, x, a);
}

TransformValue total_population_laplace(const CBIModel& model, double x, double a, double mu,
                                        std::optional<double> theta) {
  if (!(mu > 0.0)) throw DomainError("total_population_laplace needs mu > 0");
  check_order(model, x, a);
  if (model.phi().is_zero()) return total_population_closed_form(model.psi(), x, a, mu);
  InvariantFunction F(model, {0.0, mu, theta});
  return transform_ratio(F, x, a);
}

TransformValue total_population_quadrature(const CBIModel& model, double x, double a, double mu,
                                           std::optional<double> theta) {
  if (!(mu > 0.0)) throw DomainError("total_population_quadrature needs mu > 0");
  check_order(model, x, a);
  if (!model.phi().is_zero()) {
    InvariantFunction F(model, {0.0, mu, theta});
    return transform_ratio(F, x, a);
  }
  // With Phi = 0 the lambda = 0 integrals diverge at q(mu); take the ratio at a
  // tiny lambda instead. Before sigma_a the path stays above a, so the occupation
  // exceeds a * sigma_a and the lambda bias is at most lambda / (e mu a).
  const double lam = 1e-12 * mu * std::max(a, 1e-3);
  InvariantFunction F(model, {lam, mu, theta});
  TransformValue out = transform_ratio(F, x, a);
  if (a > 0.0) out.abs_error += lam / (std::exp(1.0) * mu * a);
  return out;
}

TransformValue total_population_closed_form(const BranchingMechanism& psi, double x, double a, double mu) {
  if (!(mu > 0.0)) throw DomainError("total population closed form needs mu > 0");
  if (!(x > a) || !(a >= 0.0)) throw DomainError("total population closed form needs x > a >= 0");
  TransformValue out;
  const double q = psi.root(mu);
  out.value = std::exp(-(x - a) * q);
  out.abs_error = out.value * (x - a) * q * 1e-15;
  out.status = TransformStatus::ClosedForm;
  return out;
}

TransformValue minimum_cdf(const CBIModel& model, double x, double a, std::optional<double> theta) {
  check_order(model, x, a);
  const LongRun lr = recurrence_classify(model);
  if (model.phi().is_zero() && model.psi().criticality() == Criticality::Supercritical) {
    TransformValue out;
    out.value = supercritical_cb_hit_probability(model.psi(), x, a);
    out.status = TransformStatus::ClosedForm;
    return out;
  }
  if (lr != LongRun::Transient)
    throw DomainError("minimum_cdf needs a transient model; the recurrence verdict is " + to_string(lr) +
                      " (a recurrent process returns below every level, so P(I <= a) = 1)");
  InvariantFunction F(model, {0.0, 0.0, theta});
  return transform_ratio(F, x, a);
}

double supercritical_cb_hit_probability(const BranchingMechanism& psi, double x, double a) {
  if (psi.criticality() != Criticality::Supercritical) throw DomainError("hit probability formula needs a supercritical mechanism");
  if (!(a >= 0.0) || !(x >= a)) throw DomainError("hit probability needs x >= a >= 0");
  return std::exp(-(x - a) * psi.root(0.0));
}

LogIntegral cb_f_lambda_simplified(const BranchingMechanism& psi, double x, double lambda, std::optional<double> theta) {
  CBIModel model(psi, ImmigrationMechanism::zero());
  return InvariantFunction(model, {lambda, 0.0, theta}).log_f_simplified(x);
}

TransformValue cb_hitting_simplified(const BranchingMechanism& psi, double x, double a, double lambda,
                                     std::optional<double> theta) {
  CBIModel model(psi, ImmigrationMechanism::zero());
  check_order(model, x, a);
  InvariantFunction F(model, {lambda, 0.0, theta});
  return ratio_of(F.log_f_simplified(x), F.log_f_simplified(a), a, model.boundary());
}

// ---------------------------------------------------------------- flow

FlowState v_flow(const BranchingMechanism& psi, double q, double t, const ImmigrationMechanism* phi, FlowOptions opt) {
  if (!(q >= 0.0) || !std::isfinite(q)) throw DomainError("v_flow needs finite q >= 0");
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("v_flow needs finite t >= 0");
  FlowState st;
  st.v = q;
  if (t == 0.0 || q == 0.0) {
    st.t = t;
    return st;
  }
  // Dormand-Prince 5(4)
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2;
  (void)c3;
  (void)c4;
  (void)c5;

  auto fv = [&](double v) { return -psi(std::max(v, 0.0)); };
  auto fa = [&](double v) { return phi ? (*phi)(std::max(v, 0.0)) : 0.0; };

  double v = q, A = 0.0, time = 0.0;
  const double rate = std::abs(psi(q)) / q;
  double h = std::min(t, 0.01 / std::max(rate, 1e-3));
  double k1v = fv(v), k1a = fa(v);
  int rejects = 0;
  while (time < t) {
    if (time + h > t) h = t - time;
    if (h < 1e-15 * std::max(1.0, time)) throw NumericError("v_flow: step size collapsed at t = " + std::to_string(time));
    const double v2 = v + h * a21 * k1v;
    const double k2v = fv(v2);
    const double v3 = v + h * (a31 * k1v + a32 * k2v);
    const double k3v = fv(v3), k3a = fa(v3);
    const double v4 = v + h * (a41 * k1v + a42 * k2v + a43 * k3v);
    const double k4v = fv(v4), k4a = fa(v4);
    const double v5 = v + h * (a51 * k1v + a52 * k2v + a53 * k3v + a54 * k4v);
    const double k5v = fv(v5), k5a = fa(v5);
    const double v6 = v + h * (a61 * k1v + a62 * k2v + a63 * k3v + a64 * k4v + a65 * k5v);
    const double k6v = fv(v6), k6a = fa(v6);
    const double vn = v + h * (b1 * k1v + b3 * k3v + b4 * k4v + b5 * k5v + b6 * k6v);
    const double An = A + h * (b1 * k1a + b3 * k3a + b4 * k4a + b5 * k5a + b6 * k6a);
    const double k7v = fv(vn), k7a = fa(vn);
    const double ev = h * (e1 * k1v + e3 * k3v + e4 * k4v + e5 * k5v + e6 * k6v + e7 * k7v);
    const double ea = h * (e1 * k1a + e3 * k3a + e4 * k4a + e5 * k5a + e6 * k6a + e7 * k7a);
    const double sv = opt.atol + opt.rtol * std::max(std::abs(v), std::abs(vn));
    const double sa = opt.atol + opt.rtol * std::max(std::abs(A), std::abs(An));
    const double err = std::max(std::abs(ev) / sv, std::abs(ea) / sa);
    if (!std::isfinite(err)) {
      h *= 0.2;
      if (++rejects > 200) throw NumericError("v_flow: non-finite derivative");
      continue;
    }
    if (err <= 1.0) {
      time += h;
      v = std::max(vn, 0.0);
      A = An;
      k1v = k7v;
      k1a = k7a;
      ++st.steps;
      rejects = 0;
    } else if (++rejects > 200) {
      throw NumericError("v_flow: too many rejected steps at t = " + std::to_string(time));
    }
    const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= fac;
  }
  st.v = v;
  st.accumulated_phi = A;
  st.t = t;
  return st;
}

double marginal_laplace(const CBIModel& model, double x, double t, double q, FlowOptions opt) {
  if (!(x >= 0.0)) throw DomainError("marginal_laplace needs x >= 0");
  const FlowState s = v_flow(model.psi(), q, t, &model.phi(), opt);
  return std::exp(-x * s.v - s.accumulated_phi);
}

}  // namespace cbi
