#include "cbi/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "cbi/classify.hpp"
#include "cbi/errors.hpp"
#include "cbi/sim.hpp"
#include "cbi/transform.hpp"
#include "cbi/verify.hpp"

namespace cbi::cli {

namespace {

const std::vector<double>& need(const RunConfig& cfg, const std::vector<double>& g, const char* key) {
  if (g.empty()) {
    auto it = cfg.key_lines.find(key);
    throw ConfigError(cfg.source, it == cfg.key_lines.end() ? 0 : it->second, key, "grid is empty for this command");
  }
  return g;
}

std::string cell(double v) { return format_number(v); }

struct Row {
  std::string value = "", abs_err = "", status;
};

// Evaluates one transform and turns domain and numeric errors into a status.
Row evaluate(const std::function<TransformValue()>& fn, double tol, bool* numeric_failure) {
  Row r;
  try {
    const TransformValue tv = fn();
    r.value = cell(tv.value);
    r.abs_err = cell(tv.abs_error);
    r.status = to_string(tv.status);
    if (tv.status == TransformStatus::Diverged) {
      *numeric_failure = true;
    } else if (tv.abs_error > tol) {
      r.status = "tolerance_exceeded";
      *numeric_failure = true;
    }
  } catch (const DomainError&) {
    r.status = "domain_error";
  } catch (const NumericError&) {
    r.status = "numeric_error";
    *numeric_failure = true;
  }
  return r;
}

std::string seed_cell(const sim::MCEstimate& e) {
  return std::to_string(e.seed);
}

}  // namespace

std::string cmd_classify(const RunConfig& cfg) {
  const CBIModel model = cfg.model();
  const Classification c = classify(model);
  nlohmann::ordered_json j;
  j["criticality"] = to_string(c.criticality);
  j["longrun"] = to_string(c.longrun);
  j["boundary_polar"] = to_string(c.boundary_polar);
  j["v"] = c.v;
  // JSON has no infinity
  if (std::isfinite(c.d))
    j["d"] = c.d;
  else
    j["d"] = "inf";
  j["evidence"] = nlohmann::ordered_json::array();
  for (const auto& e : c.evidence)
    j["evidence"].push_back({{"criterion", e.criterion}, {"method", to_string(e.method)}, {"verdict", e.verdict}});
  j["notes"] = c.notes;
  return j.dump(2) + "\n";
}

Report cmd_laplace(const RunConfig& cfg, const std::string& kind) {
  const CBIModel model = cfg.model();
  const auto& g = cfg.grid;
  const auto theta = g.theta;
  bool bad = false;
  std::ostringstream o;
  auto emit = [&](const std::vector<std::string>& keys, const Row& r) {
    for (const auto& k : keys) o << k << ',';
    o << r.value << ',' << r.abs_err << ',' << r.status << '\n';
  };
  auto ordered = [](double x, double a) {
    if (!(x > a)) throw DomainError("x must exceed a");
  };

  if (kind == "marginal") {
    o << "x,t,q,value,abs_err,status\n";
    for (double x : need(cfg, g.x, "grid.x"))
      for (double t : need(cfg, g.t, "grid.t"))
        for (double q : need(cfg, g.q, "grid.q")) {
          Row r;
          try {
            r.value = cell(marginal_laplace(model, x, t, q));
            r.abs_err = "";
            r.status = "ok";
          } catch (const DomainError&) {
            r.status = "domain_error";
          } catch (const NumericError&) {
            r.status = "numeric_error";
            bad = true;
          }
          emit({cell(x), cell(t), cell(q)}, r);
        }
    return {o.str(), bad ? kExitNumericFailure : kExitOk};
  }

  o << "x,a,lambda,mu,value,abs_err,status\n";
  const auto& xs = need(cfg, g.x, "grid.x");
  const auto& as = need(cfg, g.a, "grid.a");
  for (double x : xs)
    for (double a : as) {
      if (kind == "hitting") {
        for (double lam : need(cfg, g.lambda, "grid.lambda"))
          emit({cell(x), cell(a), cell(lam), ""}, evaluate([&] {
                 ordered(x, a);
                 return hitting_time_laplace(model, x, a, lam, theta);
               }, cfg.tol, &bad));
      } else if (kind == "joint") {
        for (double lam : need(cfg, g.lambda, "grid.lambda"))
          for (double mu : need(cfg, g.mu, "grid.mu"))
            emit({cell(x), cell(a), cell(lam), cell(mu)}, evaluate([&] {
                   ordered(x, a);
                   return joint_laplace(model, x, a, lam, mu, theta);
                 }, cfg.tol, &bad));
      } else if (kind == "total") {
        for (double mu : need(cfg, g.mu, "grid.mu"))
          emit({cell(x), cell(a), "", cell(mu)}, evaluate([&] {
                 ordered(x, a);
                 return total_population_laplace(model, x, a, mu, theta);
               }, cfg.tol, &bad));
      } else if (kind == "minimum") {
        emit({cell(x), cell(a), "", ""}, evaluate([&] {
               ordered(x, a);
               return minimum_cdf(model, x, a, theta);
             }, cfg.tol, &bad));
      } else {
        throw ConfigError(cfg.source, 0, "kind", "unknown transform kind '" + kind + "'");
      }
    }
  return {o.str(), bad ? kExitNumericFailure : kExitOk};
}

SimulateReport cmd_simulate(const RunConfig& cfg) {
  const CBIModel model = cfg.model();
  const auto& g = cfg.grid;
  sim::SimConfig base = cfg.sim;
  base.validate();
  const auto stepper = sim::make_stepper(model, base);
  std::ostringstream o;
  o << "estimand,lambda,mu,mc_mean,stderr,n,censored_frac,seed,flagged\n";
  // every block of paths gets its own stream range
  std::uint64_t next_offset = base.stream_offset;
  auto take_block = [&] {
    sim::SimConfig c = base;
    c.stream_offset = next_offset;
    next_offset += base.path_count;
    return c;
  };
  auto row = [&](const std::string& label, const std::string& lam, const std::string& mu, sim::MCEstimate e) {
    o << label << ',' << lam << ',' << mu << ',' << cell(e.mean) << ',' << cell(e.std_error) << ',' << e.n << ','
      << cell(e.censored_frac) << ',' << seed_cell(e) << ',' << (e.flagged ? 1 : 0) << '\n';
  };
  // mean of per-path weights where censored paths contribute 0; each could
  // have contributed at most its bound
  auto censored_mean = [](const std::vector<double>& w, const std::vector<double>& bound, const sim::SimConfig& c) {
    sim::MCEstimate e = sim::mc_mean(w);
    std::size_t censored = 0;
    double b = 0.0;
    for (double v : bound)
      if (v > 0.0) {
        ++censored;
        b += v;
      }
    e.censored_frac = w.empty() ? 0.0 : static_cast<double>(censored) / w.size();
    e.bias_bound = w.empty() ? 0.0 : b / w.size();
    e.flagged = e.bias_bound > e.std_error;
    e.seed = c.seed;
    e.stream_offset = c.stream_offset;
    return e;
  };

  for (const auto& est : cfg.estimands) {
    if (est == "marginal") {
      for (double x : need(cfg, g.x, "grid.x"))
        for (double t : need(cfg, g.t, "grid.t")) {
          const auto c = take_block();
          const auto xt = sim::terminal_values(*stepper, x, t, c);
          for (double q : need(cfg, g.q, "grid.q")) {
            std::vector<double> w;
            w.reserve(xt.size());
            for (double y : xt) w.push_back(std::exp(-q * y));
            auto e = sim::mc_mean(w);
            e.seed = c.seed;
            e.stream_offset = c.stream_offset;
            row("marginal:x=" + cell(x) + ";t=" + cell(t) + ";q=" + cell(q), "", "", e);
          }
        }
      continue;
    }
    for (double x : need(cfg, g.x, "grid.x")) {
      if (est == "minimum") {
        const auto& as = need(cfg, g.a, "grid.a");
        const auto c = take_block();
        sim::PassageOptions po;
        po.level = *std::min_element(as.begin(), as.end());
        po.track_minimum = true;
        po.escape_level = c.escape_factor * x;
        const auto out = sim::run_passages(*stepper, x, c, po);
        for (double a : as) {
          std::vector<double> w, bound;
          for (const auto& p : out) {
            w.push_back(p.minimum <= a ? 1.0 : 0.0);
            // undecided: neither below a nor escaped by the horizon
            bound.push_back(p.minimum > a && !p.escaped ? 1.0 : 0.0);
          }
          row("minimum:x=" + cell(x) + ";a=" + cell(a), "", "", censored_mean(w, bound, c));
        }
        continue;
      }
      for (double a : need(cfg, g.a, "grid.a")) {
        const auto c = take_block();
        sim::PassageOptions po;
        po.level = a;
        const auto out = sim::run_passages(*stepper, x, c, po);
        const std::string label = est + ":x=" + cell(x) + ";a=" + cell(a);
        if (est == "hitting") {
          std::vector<sim::CensoredSample> s;
          s.reserve(out.size());
          for (const auto& p : out) s.push_back({p.hit_time, !p.hit});
          for (double lam : need(cfg, g.lambda, "grid.lambda")) {
            auto e = sim::mc_laplace(s, lam, c.horizon);
            e.seed = c.seed;
            e.stream_offset = c.stream_offset;
            row(label, cell(lam), "", e);
          }
          continue;
        }
        auto weights = [&](double lam, double mu) {
          std::vector<double> w, bound;
          for (const auto& p : out) {
            w.push_back(p.hit ? std::exp(-lam * p.hit_time - mu * p.occupation) : 0.0);
            bound.push_back(p.hit ? 0.0 : std::exp(-lam * p.end_time - mu * p.occupation));
          }
          return censored_mean(w, bound, c);
        };
        if (est == "joint") {
          for (double lam : need(cfg, g.lambda, "grid.lambda"))
            for (double mu : need(cfg, g.mu, "grid.mu")) row(label, cell(lam), cell(mu), weights(lam, mu));
        } else if (est == "total") {
          for (double mu : need(cfg, g.mu, "grid.mu")) row(label, "", cell(mu), weights(0.0, mu));
        }
      }
    }
  }

  SimulateReport rep;
  rep.summary = o.str();
  if (!cfg.dump.empty()) {
    sim::SimConfig c = base;
    c.escape_factor = kInf;
    if (cfg.dump_paths) c.path_count = cfg.dump_paths;
    const double x0 = need(cfg, g.x, "grid.x").front();
    const auto paths = sim::simulate_paths(*stepper, x0, c);
    std::ostringstream d;
    d << "path_id,t,x\n";
    for (std::size_t i = 0; i < paths.size(); ++i)
      for (std::size_t k = 0; k < paths[i].values.size(); ++k)
        d << i << ',' << cell(paths[i].times[k]) << ',' << cell(paths[i].values[k]) << '\n';
    rep.dump = d.str();
  }
  return rep;
}

int cmd_verify(const RunConfig& cfg, std::ostream& out, std::optional<std::uint64_t> seed) {
  verify::SuiteOptions opt;
  opt.filter = cfg.verify_filter;
  opt.perturb = cfg.verify_perturb;
  opt.mc_scale = cfg.verify_mc_scale;
  opt.workers = cfg.sim.workers;
  if (seed) opt.seed = *seed;
  const auto results = verify::run_suite(opt, &out);
  std::size_t passed = 0;
  for (const auto& r : results) passed += r.passed ? 1 : 0;
  out << passed << "/" << results.size() << " checks passed" << std::endl;
  if (results.empty()) {
    out << "no check matches filter '" << opt.filter << "'" << std::endl;
    return kExitVerifyFailed;
  }
  return passed == results.size() ? kExitOk : kExitVerifyFailed;
}

std::string resolve_output_path(const std::string& path, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.is_absolute()) return p.string();
  const char* env = std::getenv("CBI_OUTPUT_DIR");
  if (env && *env) return (fs::path(env) / p).string();
  if (!cfg.out_dir.empty()) return (fs::path(cfg.out_dir) / p).string();
  return p.string();
}

}  // namespace cbi::cli
