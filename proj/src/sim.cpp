#include "cbi/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "cbi/quad.hpp"

namespace cbi::sim {

namespace {

constexpr double kMaxJumpsPerStep = 0.1;  // intensity * substep
constexpr double kNegligible = 1e-15;

// Brownian bridge from x to y over h with variance rate var: minimum given U.
double bridge_minimum(double x, double y, double var, double h, double u) {
  const double d = y - x;
  return 0.5 * (x + y - std::sqrt(d * d - 2.0 * var * h * std::log(u)));
}

// P(bridge minimum <= m) for m below both endpoints.
double bridge_cross_probability(double x, double y, double var, double h, double m) {
  if (x <= m || y <= m) return 1.0;
  if (!(var * h > 0.0)) return 0.0;
  return std::exp(-2.0 * (x - m) * (y - m) / (var * h));
}

struct KahanSum {
  double s = 0.0, c = 0.0;
  void add(double v) {
    const double y = v - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
};

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::ExactCIR: return "exact_cir";
    case Scheme::EulerFullTruncation: return "euler";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "exact_cir" || s == "ExactCIR") return Scheme::ExactCIR;
  if (s == "euler" || s == "EulerFullTruncation") return Scheme::EulerFullTruncation;
  throw DomainError("unknown scheme '" + s + "' (expected exact_cir or euler)");
}

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("sim: dt must be positive");
  if (!(horizon > 0.0) || std::isnan(horizon)) throw DomainError("sim: horizon must be positive");
  if (dt > horizon) throw DomainError("sim: dt must not exceed the horizon");
  if (path_count < 1) throw DomainError("sim: path_count must be at least 1");
  if (!(small_jump_cutoff > 0.0)) throw DomainError("sim: small_jump_cutoff must be positive");
  if (!(escape_factor > 1.0)) throw DomainError("sim: escape_factor must exceed 1");
}

std::size_t SimConfig::step_count() const {
  if (!std::isfinite(horizon)) throw DomainError("sim: a path grid needs a finite horizon");
  return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

// ---------------------------------------------------------------- exact CIR

ExactCIRStepper::ExactCIRStepper(double sigma2, double gamma, double b) : sigma2_(sigma2), gamma_(gamma), b_(b) {
  if (!(sigma2 > 0.0)) throw DomainError("exact CIR needs sigma2 > 0");
  if (!(b >= 0.0)) throw DomainError("exact CIR needs b >= 0");
  if (!std::isfinite(gamma)) throw DomainError("exact CIR needs finite gamma");
}

double ExactCIRStepper::advance(double x, double dt, RngStream& rng, SegmentSink* sink) const {
  // X_{t+h} = c * chi'^2_delta(x e^{-gamma h} / c)
  const double c = gamma_ == 0.0 ? 0.25 * sigma2_ * dt : -0.25 * sigma2_ * std::expm1(-gamma_ * dt) / gamma_;
  const double delta = 4.0 * b_ / sigma2_;
  const double nc = std::max(x, 0.0) * std::exp(-gamma_ * dt) / c;
  double chi;
  if (delta > 1.0) {
    const double z = rng.normal() + std::sqrt(nc);
    chi = z * z + 2.0 * rng.gamma(0.5 * (delta - 1.0));
  } else {
    const double shape = 0.5 * delta + static_cast<double>(rng.poisson(0.5 * nc));
    chi = shape > 0.0 ? 2.0 * rng.gamma(shape) : 0.0;
  }
  const double y = c * chi;
  if (sink) sink->on_segment(Segment{x, y, y, sigma2_ * std::max(x, 0.0), dt});
  return y;
}

// ---------------------------------------------------------------- jumps

JumpSampler JumpSampler::from_measure(const LevyMeasure& m, double eps) {
  if (!(eps > 0.0)) throw DomainError("jump sampler needs eps > 0");
  JumpSampler js;
  for (const auto& a : m.atoms)
    if (a.location >= eps && a.mass > 0.0) {
      Component c;
      c.kind = Component::Atom;
      c.mass = a.mass;
      c.lo = a.location;
      js.comps_.push_back(c);
    }
  if (m.has_density()) {
    LevyMeasure dens = m;
    dens.atoms.clear();
    const double lo = std::max(eps, m.lower), hi = m.upper;
    if (lo < hi) {
      Component c;
      c.lo = lo;
      c.hi = hi;
      const auto* tp = std::get_if<TemperedPower>(&m.density_form);
      if (tp && tp->decay == 0.0 && (tp->rho > 0.0 || std::isfinite(hi))) {
        c.kind = Component::PowerLaw;
        c.rho = tp->rho;
        if (c.rho == 0.0)
          c.mass = tp->scale * std::log(hi / lo);
        else
          c.mass = tp->scale * (std::pow(lo, -c.rho) - (std::isfinite(hi) ? std::pow(hi, -c.rho) : 0.0)) / c.rho;
      } else {
        c.kind = Component::Table;
        const double total = levy_tail(dens, lo);
        if (!std::isfinite(total)) throw DomainError("jump sampler: infinite mass above the cutoff");
        c.mass = total;
        // cell masses on a log grid, 32 cells per unit of log u
        constexpr double kCell = 1.0 / 32.0;
        const double y0 = std::log(lo);
        const double ymax = std::isfinite(hi) ? std::log(hi) : y0 + 700.0;
        quad::Options opt;
        opt.abs_tol = 1e-300;
        opt.rel_tol = 1e-12;
        auto g = [&](double y) {
          const double u = std::exp(y);
          return dens.density(u) * u;
        };
        std::vector<double> ys{y0}, cells;
        double y = y0, acc = 0.0;
        while (y < ymax) {
          const double y1 = std::min(y + kCell, ymax);
          const double w = quad::integrate_adaptive(g, y, y1, opt).value;
          cells.push_back(w);
          acc += w;
          ys.push_back(y1);
          y = y1;
          if (!std::isfinite(hi) && cells.size() % 32 == 0 && total - acc < 1e-13 * total) break;
        }
        // tail[k] from the top; the remainder above the last knot is total - acc
        const double rest = std::max(total - acc, 0.0);
        c.log_u = ys;
        c.tail.assign(ys.size(), 0.0);
        c.tail.back() = rest;
        for (std::size_t k = cells.size(); k-- > 0;) c.tail[k] = c.tail[k + 1] + cells[k];
        c.mass = c.tail.front();
      }
      if (c.mass > 0.0) js.comps_.push_back(std::move(c));
    }
  }
  for (const auto& c : js.comps_) js.rate_ += c.mass;
  return js;
}

double JumpSampler::draw(const Component& c, double u01) const {
  switch (c.kind) {
    case Component::Atom: return c.lo;
    case Component::PowerLaw: {
      if (c.rho == 0.0) return c.hi * std::pow(c.lo / c.hi, u01);
      // mass of [u, hi) = u01 * mass
      const double hi_term = std::isfinite(c.hi) ? std::pow(c.hi, -c.rho) : 0.0;
      const double lo_term = std::pow(c.lo, -c.rho);
      return std::pow(hi_term + u01 * (lo_term - hi_term), -1.0 / c.rho);
    }
    case Component::Table: {
      const double target = u01 * c.mass;
      const auto& T = c.tail;
      const std::size_t n = T.size();
      if (target <= T.back()) {
        // beyond the table: extend the last log-log slope
        const double s = (std::log(T[n - 1]) - std::log(T[n - 2])) / (c.log_u[n - 1] - c.log_u[n - 2]);
        if (!(s < 0.0) || T.back() <= 0.0) return std::exp(c.log_u.back());
        return std::exp(c.log_u.back() + (std::log(target) - std::log(T.back())) / s);
      }
      // first k with T[k+1] < target <= T[k]
      std::size_t lo = 0, hi = n - 1;
      while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (T[mid] >= target)
          lo = mid;
        else
          hi = mid;
      }
      const double t0 = T[lo], t1 = T[hi];
      double frac;
      if (t1 > 0.0)
        frac = (std::log(t0) - std::log(target)) / (std::log(t0) - std::log(t1));
      else
        frac = (t0 - target) / t0;
      frac = std::clamp(frac, 0.0, 1.0);
      return std::exp(c.log_u[lo] + frac * (c.log_u[hi] - c.log_u[lo]));
    }
  }
  return 0.0;
}

double JumpSampler::sample(RngStream& rng) const {
  const double pick = rng.uniform() * rate_;
  double acc = 0.0;
  const Component* chosen = &comps_.back();
  for (const auto& c : comps_) {
    acc += c.mass;
    if (pick < acc) {
      chosen = &c;
      break;
    }
  }
  if (chosen->kind == Component::Atom) return chosen->lo;
  return draw(*chosen, rng.uniform());
}

// ---------------------------------------------------------------- Euler

namespace {

struct BranchingParts {
  double gamma = 0.0, sigma2 = 0.0;
  LevyMeasure pi;
};

BranchingParts branching_parts(const BranchingMechanism& psi) {
  BranchingParts p;
  if (auto t = std::get_if<psi_forms::GeneralTriplet>(&psi.form())) {
    p.gamma = t->gamma;
    p.sigma2 = t->sigma2;
    p.pi = t->pi;
    return p;
  }
  for (const auto& term : psi.terms()) {
    if (term.power == 1.0)
      p.gamma += term.coefficient;
    else if (term.power == 2.0)
      p.sigma2 += 2.0 * term.coefficient;
    else if (term.coefficient > 0.0) {
      p.pi = stable_branching_measure(term.coefficient, term.power);
      p.gamma += stable_branching_gamma(term.coefficient, term.power);
    }
  }
  return p;
}

struct ImmigrationParts {
  double b = 0.0;
  LevyMeasure nu;
};

// x pi(dx) as a measure
LevyMeasure size_biased(const LevyMeasure& pi) {
  LevyMeasure nu;
  for (const auto& a : pi.atoms) nu.atoms.push_back({a.location, a.mass * a.location});
  if (!pi.has_density()) return nu;
  nu.lower = pi.lower;
  nu.upper = pi.upper;
  if (auto t = std::get_if<TemperedPower>(&pi.density_form)) {
    nu.density_form = TemperedPower{t->scale, t->rho - 1.0, t->decay};
  } else {
    nu.density_form = CustomDensity([pi](double u) { return u * pi.density(u); });
    nu.small_exponent = pi.small_exponent - 1.0;
    nu.tail_exponent = pi.tail_exponent - 1.0;
  }
  return nu;
}

ImmigrationParts immigration_parts(const ImmigrationMechanism& phi) {
  ImmigrationParts p;
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, phi_forms::LinearDrift>) {
          p.b = f.b;
        } else if constexpr (std::is_same_v<F, phi_forms::StablePower>) {
          p.nu = stable_immigration_measure(f.d, f.beta);
        } else if constexpr (std::is_same_v<F, phi_forms::DerivedFromPsi>) {
          const BranchingParts bp = branching_parts(f.psi);
          p.b = bp.sigma2;
          p.nu = size_biased(bp.pi);
        } else if constexpr (std::is_same_v<F, phi_forms::GeneralTriplet>) {
          p.b = f.b;
          p.nu = f.nu;
        } else {
          throw DomainError("Euler scheme does not support the log-tail immigration presets");
        }
      },
      phi.form());
  return p;
}

}  // namespace

EulerStepper::EulerStepper(const CBIModel& model, double eps, bool gaussian_small_jumps) {
  if (!(eps > 0.0)) throw DomainError("Euler scheme needs a small-jump cutoff eps > 0");
  const BranchingParts bp = branching_parts(model.psi());
  const ImmigrationParts ip = immigration_parts(model.phi());
  sigma2_ = bp.sigma2;
  drift_lin_ = bp.gamma;
  if (!bp.pi.empty()) {
    if (eps < 1.0) drift_lin_ += levy_moment(bp.pi, eps, 1.0, 1.0);
    if (gaussian_small_jumps) sigma2_ += levy_moment(bp.pi, 0.0, eps, 2.0);
    branching_ = JumpSampler::from_measure(bp.pi, eps);
  }
  drift_const_ = ip.b;
  if (!ip.nu.empty()) {
    drift_const_ += levy_moment(ip.nu, 0.0, eps, 1.0);
    immigration_ = JumpSampler::from_measure(ip.nu, eps);
  }
}

double EulerStepper::advance(double x, double dt, RngStream& rng, SegmentSink* sink) const {
  double remaining = dt;
  while (remaining > 0.0) {
    const double xp = std::max(x, 0.0);
    const double rate = immigration_.rate() + xp * branching_.rate();
    double h = remaining;
    if (rate * h > kMaxJumpsPerStep) h = kMaxJumpsPerStep / rate;
    if (remaining - h < 1e-12 * dt) h = remaining;
    const double var = sigma2_ * xp;
    double y = x + (drift_const_ - drift_lin_ * xp) * h;
    if (var > 0.0) y += std::sqrt(var * h) * rng.normal();
    y = std::max(y, 0.0);
    double next = y;
    if (immigration_.active()) {
      const std::uint64_t n = rng.poisson(immigration_.rate() * h);
      for (std::uint64_t i = 0; i < n; ++i) next += immigration_.sample(rng);
    }
    if (branching_.active() && xp > 0.0) {
      const std::uint64_t n = rng.poisson(xp * branching_.rate() * h);
      for (std::uint64_t i = 0; i < n; ++i) next += branching_.sample(rng);
    }
    const Segment seg{x, y, next, var, h};
    x = next;
    remaining -= h;
    if (sink && !sink->on_segment(seg)) break;
  }
  return x;
}

std::unique_ptr<Stepper> make_stepper(const CBIModel& model, const SimConfig& cfg) {
  if (cfg.scheme == Scheme::EulerFullTruncation)
    return std::make_unique<EulerStepper>(model, cfg.small_jump_cutoff, cfg.gaussian_small_jumps);
  const auto* quad = std::get_if<psi_forms::Quadratic>(&model.psi().form());
  const auto* lin = std::get_if<phi_forms::LinearDrift>(&model.phi().form());
  const auto* derived = std::get_if<phi_forms::DerivedFromPsi>(&model.phi().form());
  if (quad && derived) {
    // Psi' - Psi'(0) = sigma2 q for a quadratic Psi
    const auto* inner = std::get_if<psi_forms::Quadratic>(&derived->psi.form());
    if (inner) return std::make_unique<ExactCIRStepper>(quad->sigma2, quad->gamma, inner->sigma2);
  }
  if (!quad || !lin) throw DomainError("exact CIR scheme needs a quadratic Psi and a linear-drift Phi");
  return std::make_unique<ExactCIRStepper>(quad->sigma2, quad->gamma, lin->b);
}

// ---------------------------------------------------------------- stored paths

namespace {

struct StepRecorder final : SegmentSink {
  RngStream* rng;
  double min = kInf;
  bool on_segment(const Segment& s) override {
    double m = std::min(s.start, s.continuous_end);
    if (s.variance_rate > 0.0) m = std::min(m, bridge_minimum(s.start, s.continuous_end, s.variance_rate, s.duration, rng->uniform()));
    min = std::min(min, std::max(m, 0.0));
    return true;
  }
};

}  // namespace

PathSample simulate_path(const Stepper& stepper, double x0, const SimConfig& cfg, std::uint64_t path_index) {
  cfg.validate();
  if (!(x0 >= 0.0)) throw DomainError("sim: x0 must be nonnegative");
  RngStream rng(cfg.seed, cfg.stream_offset + path_index);
  const std::size_t n = cfg.step_count();
  const double escape = x0 > 0.0 ? cfg.escape_factor * x0 : kInf;
  PathSample p;
  p.times.reserve(n + 1);
  p.values.reserve(n + 1);
  p.step_min.reserve(n);
  p.times.push_back(0.0);
  p.values.push_back(x0);
  p.running_min = x0;
  double x = x0, t = 0.0;
  KahanSum occ;
  StepRecorder rec;
  rec.rng = &rng;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = std::min(cfg.dt, cfg.horizon - t);
    rec.min = kInf;
    const double y = stepper.advance(x, h, rng, &rec);
    occ.add(0.5 * (x + y) * h);
    t = (i + 1 == n) ? cfg.horizon : t + h;
    p.times.push_back(t);
    p.values.push_back(y);
    p.step_min.push_back(std::min(rec.min, y));
    p.running_min = std::min(p.running_min, p.step_min.back());
    x = y;
    if (x >= escape) {
      p.escaped = true;
      break;
    }
  }
  p.occupation = occ.s;
  p.censored = !p.escaped;
  return p;
}

std::vector<PathSample> simulate_paths(const Stepper& stepper, double x0, const SimConfig& cfg) {
  cfg.validate();
  return parallel_map<PathSample>(cfg.path_count, cfg.workers,
                                  [&](std::size_t i) { return simulate_path(stepper, x0, cfg, i); });
}

std::vector<PathSample> simulate_cir_exact(double sigma2, double gamma, double b, double x0, const SimConfig& cfg) {
  ExactCIRStepper st(sigma2, gamma, b);
  return simulate_paths(st, x0, cfg);
}

std::vector<PathSample> simulate_euler(const CBIModel& model, double x0, const SimConfig& cfg) {
  EulerStepper st(model, cfg.small_jump_cutoff, cfg.gaussian_small_jumps);
  return simulate_paths(st, x0, cfg);
}

std::optional<HitEstimate> estimate_hitting(const PathSample& path, double a) {
  if (path.values.empty()) return std::nullopt;
  if (path.values[0] <= a) return HitEstimate{0.0, 0.0};
  double occ = 0.0;
  for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
    const double t0 = path.times[i], t1 = path.times[i + 1];
    const double x = path.values[i], y = path.values[i + 1];
    const bool below = i < path.step_min.size() ? path.step_min[i] <= a : y <= a;
    if (y <= a || below) {
      double th;
      if (y <= a && x > y)
        th = t0 + (t1 - t0) * (x - a) / (x - y);
      else
        th = 0.5 * (t0 + t1);
      occ += 0.5 * (x + a) * (th - t0);
      return HitEstimate{th, occ};
    }
    occ += 0.5 * (x + y) * (t1 - t0);
  }
  return std::nullopt;
}

std::optional<double> estimate_hitting_time(const PathSample& path, double a) {
  auto h = estimate_hitting(path, a);
  if (!h) return std::nullopt;
  return h->time;
}

double estimate_minimum(const PathSample& path) { return path.running_min; }

// ---------------------------------------------------------------- online passage

namespace {

struct PassageSink final : SegmentSink {
  RngStream* rng = nullptr;
  const PassageOptions* opt = nullptr;
  double t = 0.0;
  KahanSum occ;
  PassageOutcome out;
  bool stop = false;

  bool on_segment(const Segment& s) override {
    const double x = s.start, y = s.continuous_end, h = s.duration;
    // threshold below which this segment's minimum matters
    double m_ref = -kInf;
    if (opt->level && !out.hit) m_ref = *opt->level;
    if (opt->track_minimum) m_ref = std::max(m_ref, out.minimum);
    double seg_min = std::min(x, y);
    if (m_ref > -kInf && s.variance_rate > 0.0 &&
        bridge_cross_probability(x, y, s.variance_rate, h, m_ref) > kNegligible)
      seg_min = std::min(seg_min, std::max(bridge_minimum(x, y, s.variance_rate, h, rng->uniform()), 0.0));
    if (opt->track_minimum) out.minimum = std::min(out.minimum, seg_min);

    if (opt->level && !out.hit && seg_min <= *opt->level) {
      const double a = *opt->level;
      const double th = (y <= a && x > y) ? t + h * (x - a) / (x - y) : t + 0.5 * h;
      out.hit = true;
      out.hit_time = th;
      occ.add(0.5 * (x + a) * (th - t));
      out.occupation = occ.s;
      if (opt->stop_at_hit) {
        out.end_time = th;
        stop = true;
        return false;
      }
      occ.add(0.5 * (x + y) * h - 0.5 * (x + a) * (th - t));
    } else {
      occ.add(0.5 * (x + y) * h);
    }
    t += h;
    if (s.next >= opt->escape_level) {
      out.escaped = true;
      stop = true;
      return false;
    }
    return true;
  }
};

}  // namespace

PassageOutcome run_passage(const Stepper& stepper, double x0, const SimConfig& cfg, std::uint64_t path_index,
                           const PassageOptions& opt) {
  cfg.validate();
  RngStream rng(cfg.seed, cfg.stream_offset + path_index);
  PassageSink sink;
  sink.rng = &rng;
  sink.opt = &opt;
  sink.out.minimum = x0;
  if (opt.level && x0 <= *opt.level) {
    sink.out.hit = true;
    sink.out.hit_time = 0.0;
    if (opt.stop_at_hit) return sink.out;
  }
  double x = x0;
  while (!sink.stop && sink.t < cfg.horizon * (1.0 - 1e-15)) {
    const double h = std::min(cfg.dt, cfg.horizon - sink.t);
    const double t_before = sink.t;
    x = stepper.advance(x, h, rng, &sink);
    if (!sink.stop) sink.t = t_before + h;  // keep the grid free of substep rounding
  }
  if (!(sink.out.hit && opt.stop_at_hit)) {
    sink.out.occupation = sink.occ.s;
    sink.out.end_time = sink.t;
  }
  return sink.out;
}

std::vector<PassageOutcome> run_passages(const Stepper& stepper, double x0, const SimConfig& cfg,
                                         const PassageOptions& opt) {
  cfg.validate();
  return parallel_map<PassageOutcome>(cfg.path_count, cfg.workers,
                                      [&](std::size_t i) { return run_passage(stepper, x0, cfg, i, opt); });
}

std::vector<double> terminal_values(const Stepper& stepper, double x0, double t, const SimConfig& cfg) {
  cfg.validate();
  if (!(t > 0.0)) throw DomainError("terminal_values needs t > 0");
  const auto n = static_cast<std::size_t>(std::ceil(t / cfg.dt - 1e-9));
  return parallel_map<double>(cfg.path_count, cfg.workers, [&](std::size_t i) {
    RngStream rng(cfg.seed, cfg.stream_offset + i);
    double x = x0, s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double h = std::min(cfg.dt, t - s);
      x = stepper.step(x, h, rng);
      s += h;
    }
    return x;
  });
}

// ---------------------------------------------------------------- estimators

MCEstimate mc_mean(const std::vector<double>& values) {
  MCEstimate e;
  e.n = values.size();
  if (e.n == 0) throw DomainError("mc_mean needs at least one sample");
  KahanSum s;
  for (double v : values) s.add(v);
  e.mean = s.s / static_cast<double>(e.n);
  KahanSum q;
  for (double v : values) q.add((v - e.mean) * (v - e.mean));
  e.std_error = e.n > 1 ? std::sqrt(q.s / static_cast<double>(e.n - 1) / static_cast<double>(e.n)) : 0.0;
  return e;
}

MCEstimate mc_laplace(const std::vector<CensoredSample>& samples, double lambda, double horizon, double bias_tol) {
  if (!(lambda >= 0.0)) throw DomainError("mc_laplace needs lambda >= 0");
  std::vector<double> vals;
  vals.reserve(samples.size());
  std::size_t censored = 0;
  for (const auto& s : samples) {
    if (s.censored) {
      ++censored;
      vals.push_back(0.0);
    } else {
      vals.push_back(std::exp(-lambda * s.value));
    }
  }
  MCEstimate e = mc_mean(vals);
  e.censored_frac = static_cast<double>(censored) / static_cast<double>(e.n);
  e.bias_bound = censored ? e.censored_frac * std::exp(-lambda * horizon) : 0.0;
  const double tol = bias_tol < 0.0 ? e.std_error : bias_tol;
  e.flagged = e.bias_bound > tol;
  return e;
}

double joint_stderr(const MCEstimate& a, const MCEstimate& b) { return std::hypot(a.std_error, b.std_error); }

// ---------------------------------------------------------------- parallel

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned w = std::min<std::size_t>(workers, n);
  pool.reserve(w);
  for (unsigned k = 0; k < w; ++k) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace cbi::sim
