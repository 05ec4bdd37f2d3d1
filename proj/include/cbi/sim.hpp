#pragma once

// Monte Carlo for CBI paths: exact CIR transitions, a full-truncation Euler
// scheme with compound-Poisson big jumps, Brownian-bridge crossing correction,
// and deterministic parallel aggregation.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cbi/mechanism.hpp"
#include "cbi/rng.hpp"

namespace cbi::sim {

enum class Scheme { ExactCIR, EulerFullTruncation };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct SimConfig {
  Scheme scheme = Scheme::ExactCIR;
  double dt = 1e-3;
  double horizon = 10.0;
  std::size_t path_count = 1000;
  std::uint64_t seed = 1;
  std::uint64_t stream_offset = 0;
  double small_jump_cutoff = 1e-3;
  double escape_factor = 50.0;  // escape level = escape_factor * x0
  bool gaussian_small_jumps = false;
  unsigned workers = 1;

  void validate() const;
  std::size_t step_count() const;
};

// A piece of path with continuous motion from `start` to `continuous_end` over
// `duration`, followed by the jumps that bring it to `next`. variance_rate is the
// diffusion coefficient frozen at the start of the piece.
struct Segment {
  double start = 0.0;
  double continuous_end = 0.0;
  double next = 0.0;
  double variance_rate = 0.0;
  double duration = 0.0;
};

class SegmentSink {
 public:
  virtual ~SegmentSink() = default;
  // false stops the advance early
  virtual bool on_segment(const Segment& seg) = 0;
};

class Stepper {
 public:
  virtual ~Stepper() = default;
  // Advances x over dt, reporting every segment; returns the value at the end
  // (or at the segment where the sink stopped).
  virtual double advance(double x, double dt, RngStream& rng, SegmentSink* sink) const = 0;
  double step(double x, double dt, RngStream& rng) const { return advance(x, dt, rng, nullptr); }
};

// dX = (b - gamma X) dt + sqrt(sigma2 X) dB, sampled from the exact transition law.
class ExactCIRStepper final : public Stepper {
 public:
  ExactCIRStepper(double sigma2, double gamma, double b);
  double advance(double x, double dt, RngStream& rng, SegmentSink* sink) const override;

 private:
  double sigma2_, gamma_, b_;
};

// Jumps of a Levy measure restricted to [eps, inf): total rate and a size sampler.
class JumpSampler {
 public:
  JumpSampler() = default;
  static JumpSampler from_measure(const LevyMeasure& m, double eps);

  bool active() const { return rate_ > 0.0; }
  double rate() const { return rate_; }
  double sample(RngStream& rng) const;

 private:
  struct Component {
    enum Kind { Atom, PowerLaw, Table } kind = Atom;
    double mass = 0.0;
    double lo = 0.0, hi = 0.0, rho = 0.0;  // atom location is lo
    std::vector<double> log_u, tail;  // tail[k] = mass of [u_k, hi), decreasing
  };
  double draw(const Component& c, double u01) const;

  std::vector<Component> comps_;
  double rate_ = 0.0;
};

// Full-truncation Euler with small jumps folded into the drift.
class EulerStepper final : public Stepper {
 public:
  EulerStepper(const CBIModel& model, double eps, bool gaussian_small_jumps = false);
  double advance(double x, double dt, RngStream& rng, SegmentSink* sink) const override;

  double drift_constant() const { return drift_const_; }
  double drift_linear() const { return drift_lin_; }
  double diffusion() const { return sigma2_; }
  const JumpSampler& immigration() const { return immigration_; }
  const JumpSampler& branching() const { return branching_; }

 private:
  double sigma2_ = 0.0;
  double drift_const_ = 0.0;  // b + int_0^eps u nu(du)
  double drift_lin_ = 0.0;    // gamma + int_eps^1 u pi(du)
  JumpSampler immigration_, branching_;
};

std::unique_ptr<Stepper> make_stepper(const CBIModel& model, const SimConfig& cfg);

struct PathSample {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> step_min;  // bridge-corrected minimum over step i -> i+1
  double running_min = 0.0;
  double occupation = 0.0;  // trapezoid int X dt over the recorded grid
  bool escaped = false;
  bool censored = false;    // still inside [0, escape level] at the horizon
};

PathSample simulate_path(const Stepper& stepper, double x0, const SimConfig& cfg, std::uint64_t path_index);
std::vector<PathSample> simulate_paths(const Stepper& stepper, double x0, const SimConfig& cfg);
std::vector<PathSample> simulate_cir_exact(double sigma2, double gamma, double b, double x0, const SimConfig& cfg);
std::vector<PathSample> simulate_euler(const CBIModel& model, double x0, const SimConfig& cfg);

struct HitEstimate {
  double time = 0.0;
  double occupation = 0.0;  // int_0^{sigma_a} X dt
};

std::optional<HitEstimate> estimate_hitting(const PathSample& path, double a);
std::optional<double> estimate_hitting_time(const PathSample& path, double a);
double estimate_minimum(const PathSample& path);

// Online first passage: stops at the hit of `level`, at the escape level, or at
// the horizon, without storing the path.
struct PassageOptions {
  std::optional<double> level;
  bool stop_at_hit = true;
  double escape_level = kInf;
  bool track_minimum = false;
};

struct PassageOutcome {
  bool hit = false;
  double hit_time = kInf;
  double occupation = 0.0;  // up to the hit, or up to the stop time
  double minimum = 0.0;
  bool escaped = false;
  double end_time = 0.0;
};

PassageOutcome run_passage(const Stepper& stepper, double x0, const SimConfig& cfg, std::uint64_t path_index,
                           const PassageOptions& opt);
std::vector<PassageOutcome> run_passages(const Stepper& stepper, double x0, const SimConfig& cfg,
                                         const PassageOptions& opt);
std::vector<double> terminal_values(const Stepper& stepper, double x0, double t, const SimConfig& cfg);

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double censored_frac = 0.0;
  double bias_bound = 0.0;
  bool flagged = false;
  std::uint64_t seed = 0;
  std::uint64_t stream_offset = 0;
};

struct CensoredSample {
  double value = 0.0;
  bool censored = false;
};

MCEstimate mc_mean(const std::vector<double>& values);
// Mean of exp(-lambda * sample). Censored samples contribute 0; each could have
// contributed at most exp(-lambda * horizon). The estimate is flagged when that
// bias bound exceeds bias_tol (negative: the standard error).
MCEstimate mc_laplace(const std::vector<CensoredSample>& samples, double lambda, double horizon = kInf,
                      double bias_tol = -1.0);
// sqrt(se_a^2 + se_b^2); valid for estimates from disjoint streams
double joint_stderr(const MCEstimate& a, const MCEstimate& b);

// Runs fn(i) for i in [0, n) on `workers` threads; fn must only write slot i.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

template <class R>
std::vector<R> parallel_map(std::size_t n, unsigned workers, const std::function<R(std::size_t)>& fn) {
  std::vector<R> out(n);
  parallel_for(n, workers, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace cbi::sim
