#include "cbi/quad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cbi/errors.hpp"

namespace cbi::quad {

namespace {

// QUADPACK qk15 abscissae and weights.
constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = std::numeric_limits<double>::min();

struct Panel {
  double a, b, value, error;
};

// max-heap on error; ties broken on the left endpoint so the refinement order is
// a pure function of the integrand
bool panel_less(const Panel& x, const Panel& y) {
  if (x.error != y.error) return x.error < y.error;
  return x.a > y.a;
}

}  // namespace

std::string to_string(Status s) {
  switch (s) {
    case Status::Converged: return "converged";
    case Status::Truncated: return "truncated";
    case Status::Diverged: return "diverged";
    case Status::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

std::string to_string(ProbeResult::Kind k) {
  switch (k) {
    case ProbeResult::Kind::ConvergesTo: return "converges";
    case ProbeResult::Kind::Diverges: return "diverges";
    case ProbeResult::Kind::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

QuadratureResult gauss_kronrod_15(const Integrand& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double resg = fc * kWg[3];
  double resk = fc * kWgk[7];
  double resabs = std::abs(resk);
  double fv1[7], fv2[7];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    fv1[j] = f1;
    fv2[j] = f2;
    resk += kWgk[j] * (f1 + f2);
    resabs += kWgk[j] * (std::abs(f1) + std::abs(f2));
    if (j % 2 == 1) resg += kWg[j / 2] * (f1 + f2);
  }
  const double reskh = 0.5 * resk;
  double resasc = kWgk[7] * std::abs(fc - reskh);
  for (int j = 0; j < 7; ++j) resasc += kWgk[j] * (std::abs(fv1[j] - reskh) + std::abs(fv2[j] - reskh));

  QuadratureResult r;
  r.value = resk * half;
  resabs *= std::abs(half);
  resasc *= std::abs(half);
  double err = std::abs((resk - resg) * half);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  if (resabs > kTiny / (50.0 * kEps)) err = std::max(50.0 * kEps * resabs, err);
  r.abs_error = err;
  r.evaluations = 15;
  if (!std::isfinite(r.value) || !std::isfinite(err)) r.status = Status::Inconclusive;
  return r;
}

QuadratureResult integrate_adaptive(const Integrand& f, double a, double b, double tol) {
  Options opt;
  opt.abs_tol = tol;
  return integrate_adaptive(f, a, b, opt);
}

QuadratureResult integrate_adaptive(const Integrand& f, double a, double b, const Options& opt) {
  if (!(a <= b)) throw DomainError("integrate_adaptive: requires a <= b");
  if (!std::isfinite(a) || !std::isfinite(b)) throw DomainError("integrate_adaptive: bounds must be finite");
  QuadratureResult out;
  if (a == b) return out;

  std::vector<double> cuts{a};
  {
    std::vector<double> bp = opt.breakpoints;
    std::sort(bp.begin(), bp.end());
    for (double p : bp)
      if (p > cuts.back() && p < b) cuts.push_back(p);
    cuts.push_back(b);
  }

  std::vector<Panel> heap;
  heap.reserve(cuts.size() + opt.max_subdivisions + 2);
  double total = 0.0, total_err = 0.0;
  bool bad = false;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    auto r = gauss_kronrod_15(f, cuts[i], cuts[i + 1]);
    out.evaluations += r.evaluations;
    if (r.status != Status::Converged) bad = true;
    heap.push_back({cuts[i], cuts[i + 1], r.value, r.abs_error});
    total += r.value;
    total_err += r.abs_error;
  }
  std::make_heap(heap.begin(), heap.end(), panel_less);

  auto target = [&] { return std::max(opt.abs_tol, opt.rel_tol * std::abs(total)); };
  std::size_t splits = 0;
  while (!bad && total_err > target()) {
    if (splits >= opt.max_subdivisions) break;
    std::pop_heap(heap.begin(), heap.end(), panel_less);
    Panel p = heap.back();
    heap.pop_back();
    const double mid = 0.5 * (p.a + p.b);
    if (!(mid > p.a && mid < p.b)) {
      // interval at machine resolution: keep it and stop refining
      heap.push_back(p);
      std::push_heap(heap.begin(), heap.end(), panel_less);
      break;
    }
    auto l = gauss_kronrod_15(f, p.a, mid);
    auto r = gauss_kronrod_15(f, mid, p.b);
    out.evaluations += l.evaluations + r.evaluations;
    if (l.status != Status::Converged || r.status != Status::Converged) bad = true;
    total += l.value + r.value - p.value;
    total_err += l.abs_error + r.abs_error - p.error;
    heap.push_back({p.a, mid, l.value, l.abs_error});
    std::push_heap(heap.begin(), heap.end(), panel_less);
    heap.push_back({mid, p.b, r.value, r.abs_error});
    std::push_heap(heap.begin(), heap.end(), panel_less);
    ++splits;
  }

  // fixed summation order: by left endpoint
  std::sort(heap.begin(), heap.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
  double sum = 0.0, err = 0.0, comp = 0.0;
  for (const auto& p : heap) {
    const double y = p.value - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
    err += p.error;
  }
  out.value = sum;
  out.abs_error = err;
  if (bad || !std::isfinite(sum))
    out.status = Status::Inconclusive;
  else
    out.status = err <= std::max(opt.abs_tol, opt.rel_tol * std::abs(sum)) ? Status::Converged : Status::Inconclusive;
  return out;
}

QuadratureResult integrate_decaying_tail(const Integrand& f, double a, double rate, double tol) {
  if (!(rate > 0.0)) throw DomainError("integrate_decaying_tail: decay rate must be positive");
  if (!(tol > 0.0)) throw DomainError("integrate_decaying_tail: tolerance must be positive");
  const int samples = 64;
  const double spacing = 0.5 / rate;
  double K = 0.0;
  int argmax = 0;
  for (int j = 0; j <= samples; ++j) {
    const double z = a + j * spacing;
    const double v = std::abs(f(z)) * std::exp(rate * (z - a));
    if (std::isfinite(v) && v > K) {
      K = v;
      argmax = j;
    }
  }
  QuadratureResult out;
  out.evaluations = samples + 1;
  if (K == 0.0) return out;
  const double Z = a + std::max(1.0, std::log(2.0 * K / (rate * tol)) / rate);
  Options opt;
  opt.abs_tol = 0.5 * tol;
  auto r = integrate_adaptive(f, a, Z, opt);
  out.value = r.value;
  out.evaluations += r.evaluations;
  const double tail_bound = K * std::exp(-rate * (Z - a)) / rate;
  out.abs_error = r.abs_error + tail_bound;
  out.status = r.status;
  // the bound is only trustworthy when the sampled envelope peaked inside the window
  if (out.status == Status::Converged && argmax == samples) out.status = Status::Truncated;
  return out;
}

QuadratureResult integrate_power_singular(const Integrand& f, double a, double b, double rho, double tol,
                                          double tail_rate) {
  if (!(rho > 0.0)) throw DomainError("integrate_power_singular: exponent must be positive");
  if (!(b > a)) throw DomainError("integrate_power_singular: requires a < b");
  double finite_end = b;
  QuadratureResult tail;
  const bool infinite = !std::isfinite(b);
  if (infinite) {
    if (!(tail_rate > 0.0)) throw DomainError("integrate_power_singular: infinite range needs a tail rate");
    finite_end = a + 1.0;
    tail = integrate_decaying_tail(f, finite_end, tail_rate, 0.5 * tol);
  }
  // z = a + s^{1/rho}, dz = (1/rho) s^{1/rho - 1} ds
  const double inv = 1.0 / rho;
  const double smax = std::pow(finite_end - a, rho);
  // Within a few million ulps of a nonzero endpoint z - a is too coarse to
  // resolve the singularity; that sliver is integrated from the power law.
  double delta = 0.0, sliver = 0.0;
  if (a != 0.0) {
    delta = std::min(0.5 * (finite_end - a), std::ldexp(1.0, 20) * (std::nextafter(std::abs(a), kInf) - std::abs(a)));
    delta = (a + delta) - a;
    const double fd = f(a + delta);
    if (std::isfinite(fd)) sliver = fd * delta * inv;
  }
  const double smin = delta > 0.0 ? std::pow(delta, rho) : 0.0;
  auto g = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double dz = std::pow(s, inv);
    const double jac = inv * std::pow(s, inv - 1.0);
    const double v = f(a + dz) * jac;
    return std::isfinite(v) ? v : 0.0;
  };
  auto r = integrate_adaptive(g, smin, smax, infinite ? 0.5 * tol : tol);
  r.value += sliver;
  if (infinite) {
    r.value += tail.value;
    r.abs_error += tail.abs_error;
    r.evaluations += tail.evaluations;
    if (r.status == Status::Converged) r.status = tail.status;
  }
  return r;
}

ProbeResult divergence_probe(const Integrand& f, double endpoint, Side side, double span, int window_count) {
  ProbeResult out;
  if (!(span > 0.0) || window_count < 17) throw DomainError("divergence_probe: needs span > 0 and >= 17 windows");
  const double sgn = side == Side::FromAbove ? 1.0 : -1.0;
  double partial = 0.0;
  for (int k = 0; k < window_count; ++k) {
    const double outer = std::ldexp(span, -k);
    const double inner = std::ldexp(span, -(k + 1));
    double lo = endpoint + sgn * inner, hi = endpoint + sgn * outer;
    if (lo > hi) std::swap(lo, hi);
    if (!(hi > lo)) break;
    Options opt;
    opt.abs_tol = 0.0;
    opt.rel_tol = 1e-10;
    opt.max_subdivisions = 200;
    auto r = integrate_adaptive(f, lo, hi, opt);
    if (!std::isfinite(r.value)) return out;
    out.window_sums.push_back(std::abs(r.value));
    partial += r.value;
  }
  const auto& w = out.window_sums;
  const int n = static_cast<int>(w.size());
  if (n < 17) return out;
  double log_ratio_sum = 0.0;
  bool all_contract = true;
  for (int k = n - 16; k < n; ++k) {
    if (w[k - 1] == 0.0) {
      if (w[k] != 0.0) all_contract = false;
      continue;
    }
    const double r = w[k] / w[k - 1];
    if (r == 0.0) continue;
    log_ratio_sum += std::log(r);
    if (!(r < 0.999)) all_contract = false;
  }
  const double gmean = std::exp(log_ratio_sum / 16.0);
  if (gmean >= 0.999) {
    out.kind = ProbeResult::Kind::Diverges;
    return out;
  }
  if (all_contract) {
    out.kind = ProbeResult::Kind::ConvergesTo;
    const double r = w[n - 1] > 0.0 && w[n - 2] > 0.0 ? w[n - 1] / w[n - 2] : 0.0;
    out.value = partial + (partial >= 0 ? 1.0 : -1.0) * w[n - 1] * r / (1.0 - r);
  }
  return out;
}

}  // namespace cbi::quad
