#include "cbi/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace cbi::cli {

ConfigError::ConfigError(const std::string& source, int line, const std::string& key, const std::string& msg)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : "") +
                         (key.empty() ? "" : " [" + key + "]") + ": " + msg),
      line_(line),
      key_(key) {}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

struct Parser {
  std::string source;
  int line = 0;
  std::string key;

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(source, line, key, msg); }

  double number(const std::string& s) const {
    const std::string t = trim(s);
    if (t == "inf" || t == "+inf") return kInf;
    if (t == "-inf") return -kInf;
    double v = 0.0;
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) fail("expected a number, got '" + t + "'");
    return v;
  }
  std::uint64_t count(const std::string& s) const {
    const std::string t = trim(s);
    std::uint64_t v = 0;
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
      fail("expected a nonnegative integer, got '" + t + "'");
    return v;
  }
  bool boolean(const std::string& s) const {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    fail("expected true or false, got '" + t + "'");
  }
  std::vector<double> numbers(const std::string& s) const {
    std::vector<double> out;
    for (const auto& p : split(s, ',')) out.push_back(number(p));
    if (out.empty()) fail("empty list");
    return out;
  }
  std::vector<Atom> atoms(const std::string& s) const {
    std::vector<Atom> out;
    if (trim(s).empty()) return out;
    for (const auto& p : split(s, ',')) {
      const auto c = p.find(':');
      if (c == std::string::npos) fail("atoms are written location:mass, got '" + p + "'");
      out.push_back({number(p.substr(0, c)), number(p.substr(c + 1))});
    }
    return out;
  }
  std::string choice(const std::string& s, std::initializer_list<const char*> allowed) const {
    const std::string t = trim(s);
    std::string list;
    for (const char* a : allowed) {
      if (t == a) return t;
      list += (list.empty() ? "" : ", ") + std::string(a);
    }
    fail("unknown value '" + t + "' (expected one of " + list + ")");
  }
};

using Setter = std::function<void(RunConfig&, const Parser&, const std::string&)>;

void add_measure_keys(std::map<std::string, Setter>& t, const std::string& prefix,
                      std::function<MeasureSpec&(RunConfig&)> get) {
  t[prefix + ".density"] = [get](RunConfig& c, const Parser& p, const std::string& v) {
    get(c).density = p.choice(v, {"none", "tempered"}) == "tempered";
  };
  t[prefix + ".scale"] = [get](RunConfig& c, const Parser& p, const std::string& v) { get(c).scale = p.number(v); };
  t[prefix + ".rho"] = [get](RunConfig& c, const Parser& p, const std::string& v) { get(c).rho = p.number(v); };
  t[prefix + ".decay"] = [get](RunConfig& c, const Parser& p, const std::string& v) { get(c).decay = p.number(v); };
  t[prefix + ".lower"] = [get](RunConfig& c, const Parser& p, const std::string& v) { get(c).lower = p.number(v); };
  t[prefix + ".upper"] = [get](RunConfig& c, const Parser& p, const std::string& v) { get(c).upper = p.number(v); };
  t[prefix + ".atoms"] = [get](RunConfig& c, const Parser& p, const std::string& v) { get(c).atoms = p.atoms(v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    using P = const Parser&;
    using S = const std::string&;
    t["psi.form"] = [](RunConfig& c, P p, S v) {
      c.psi.form = p.choice(v, {"linear", "quadratic", "stable", "mixed", "triplet"});
    };
    t["psi.gamma"] = [](RunConfig& c, P p, S v) { c.psi.gamma = p.number(v); };
    t["psi.sigma2"] = [](RunConfig& c, P p, S v) { c.psi.sigma2 = p.number(v); };
    t["psi.d"] = [](RunConfig& c, P p, S v) { c.psi.d = p.number(v); };
    t["psi.alpha"] = [](RunConfig& c, P p, S v) { c.psi.alpha = p.number(v); };
    add_measure_keys(t, "psi.pi", [](RunConfig& c) -> MeasureSpec& { return c.psi.pi; });

    t["phi.form"] = [](RunConfig& c, P p, S v) {
      c.phi.form = p.choice(v, {"zero", "linear", "stable", "conditioned", "triplet", "log_tail"});
    };
    t["phi.b"] = [](RunConfig& c, P p, S v) { c.phi.b = p.number(v); };
    t["phi.dprime"] = [](RunConfig& c, P p, S v) { c.phi.dprime = p.number(v); };
    t["phi.beta"] = [](RunConfig& c, P p, S v) { c.phi.beta = p.number(v); };
    t["phi.kind"] = [](RunConfig& c, P p, S v) { c.phi.kind = p.choice(v, {"inverse_log", "inverse_loglog"}); };
    t["phi.alpha"] = [](RunConfig& c, P p, S v) { c.phi.alpha = p.number(v); };
    add_measure_keys(t, "phi.nu", [](RunConfig& c) -> MeasureSpec& { return c.phi.nu; });

    t["grid.x"] = [](RunConfig& c, P p, S v) { c.grid.x = p.numbers(v); };
    t["grid.a"] = [](RunConfig& c, P p, S v) { c.grid.a = p.numbers(v); };
    t["grid.lambda"] = [](RunConfig& c, P p, S v) { c.grid.lambda = p.numbers(v); };
    t["grid.mu"] = [](RunConfig& c, P p, S v) { c.grid.mu = p.numbers(v); };
    t["grid.t"] = [](RunConfig& c, P p, S v) { c.grid.t = p.numbers(v); };
    t["grid.q"] = [](RunConfig& c, P p, S v) { c.grid.q = p.numbers(v); };
    t["grid.theta"] = [](RunConfig& c, P p, S v) { c.grid.theta = p.number(v); };
    t["quad.tol"] = [](RunConfig& c, P p, S v) {
      c.tol = p.number(v);
      if (!(c.tol > 0.0)) p.fail("tolerance must be positive");
    };

    t["sim.scheme"] = [](RunConfig& c, P p, S v) {
      c.sim.scheme = sim::scheme_from_string(p.choice(v, {"exact_cir", "euler"}));
    };
    t["sim.dt"] = [](RunConfig& c, P p, S v) { c.sim.dt = p.number(v); };
    t["sim.horizon"] = [](RunConfig& c, P p, S v) { c.sim.horizon = p.number(v); };
    t["sim.paths"] = [](RunConfig& c, P p, S v) { c.sim.path_count = p.count(v); };
    t["sim.seed"] = [](RunConfig& c, P p, S v) { c.sim.seed = p.count(v); };
    t["sim.stream_offset"] = [](RunConfig& c, P p, S v) { c.sim.stream_offset = p.count(v); };
    t["sim.eps"] = [](RunConfig& c, P p, S v) { c.sim.small_jump_cutoff = p.number(v); };
    t["sim.escape_factor"] = [](RunConfig& c, P p, S v) { c.sim.escape_factor = p.number(v); };
    t["sim.gaussian_small_jumps"] = [](RunConfig& c, P p, S v) { c.sim.gaussian_small_jumps = p.boolean(v); };
    t["sim.workers"] = [](RunConfig& c, P p, S v) { c.sim.workers = static_cast<unsigned>(p.count(v)); };
    t["sim.estimand"] = [](RunConfig& c, P p, S v) {
      c.estimands.clear();
      for (const auto& e : split(v, ','))
        c.estimands.push_back(p.choice(e, {"hitting", "joint", "total", "minimum", "marginal"}));
      if (c.estimands.empty()) p.fail("empty estimand list");
    };
    t["sim.dump"] = [](RunConfig& c, P, S v) { c.dump = trim(v); };
    t["sim.dump_paths"] = [](RunConfig& c, P p, S v) { c.dump_paths = p.count(v); };

    t["output.dir"] = [](RunConfig& c, P, S v) { c.out_dir = trim(v); };
    t["verify.filter"] = [](RunConfig& c, P, S v) { c.verify_filter = trim(v); };
    t["verify.perturb"] = [](RunConfig& c, P, S v) { c.verify_perturb = trim(v); };
    t["verify.mc_scale"] = [](RunConfig& c, P p, S v) {
      c.verify_mc_scale = p.number(v);
      if (!(c.verify_mc_scale > 0.0)) p.fail("mc_scale must be positive");
    };
    return t;
  }();
  return table;
}

}  // namespace

LevyMeasure MeasureSpec::build() const {
  LevyMeasure m;
  if (density) m.density_form = TemperedPower{scale, rho, decay};
  m.lower = lower;
  m.upper = upper;
  m.atoms = atoms;
  return m;
}

BranchingMechanism PsiSpec::build() const {
  if (form == "linear") return BranchingMechanism::linear(gamma);
  if (form == "quadratic") return BranchingMechanism::quadratic(sigma2, gamma);
  if (form == "stable") return BranchingMechanism::stable(d, alpha);
  if (form == "mixed") return BranchingMechanism::mixed(gamma, sigma2, d, alpha);
  return BranchingMechanism::triplet(gamma, sigma2, pi.build());
}

ImmigrationMechanism PhiSpec::build(const BranchingMechanism& psi) const {
  if (form == "zero") return ImmigrationMechanism::zero();
  if (form == "linear") return ImmigrationMechanism::linear(b);
  if (form == "stable") return ImmigrationMechanism::stable(dprime, beta);
  if (form == "conditioned") return ImmigrationMechanism::derived_from(psi);
  if (form == "log_tail")
    return ImmigrationMechanism::log_tail(kind == "inverse_log" ? LogTailKind::InverseLog : LogTailKind::InverseLogLog,
                                          alpha);
  return ImmigrationMechanism::triplet(b, nu.build());
}

CBIModel RunConfig::model() const {
  auto line_of = [&](const std::string& k) {
    auto it = key_lines.find(k);
    return it == key_lines.end() ? 0 : it->second;
  };
  std::optional<BranchingMechanism> psi_m;
  try {
    psi_m = psi.build();
  } catch (const DomainError& e) {
    throw ConfigError(source, line_of("psi.form"), "psi.form", std::string("invalid branching mechanism: ") + e.what());
  }
  try {
    return CBIModel(*psi_m, phi.build(*psi_m));
  } catch (const DomainError& e) {
    throw ConfigError(source, line_of("phi.form"), "phi.form", std::string("invalid model: ") + e.what());
  }
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig cfg;
  cfg.source = source;
  Parser p;
  p.source = source;
  std::string raw;
  while (std::getline(in, raw)) {
    ++p.line;
    p.key.clear();
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) p.fail("expected 'key = value'");
    p.key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const auto& table = setters();
    auto it = table.find(p.key);
    if (it == table.end()) p.fail("unknown key");
    if (cfg.key_lines.count(p.key)) p.fail("key set twice (first on line " + std::to_string(cfg.key_lines[p.key]) + ")");
    try {
      it->second(cfg, p, value);
    } catch (const DomainError& e) {
      p.fail(e.what());
    }
    cfg.key_lines[p.key] = p.line;
  }
  try {
    cfg.sim.validate();
  } catch (const DomainError& e) {
    throw ConfigError(source, cfg.key_lines.count("sim.dt") ? cfg.key_lines["sim.dt"] : 0, "sim", e.what());
  }
  (void)cfg.model();  // surface model errors at parse time
  return cfg;
}

RunConfig parse_config_string(const std::string& text, const std::string& source) {
  std::istringstream is(text);
  return parse_config(is, source);
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path, 0, "", "cannot open config file");
  return parse_config(f, path);
}

namespace {

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
  return s;
}

void emit_measure(std::ostream& o, const std::string& prefix, const MeasureSpec& m) {
  o << prefix << ".density = " << (m.density ? "tempered" : "none") << "\n";
  if (m.density) {
    o << prefix << ".scale = " << format_number(m.scale) << "\n";
    o << prefix << ".rho = " << format_number(m.rho) << "\n";
    o << prefix << ".decay = " << format_number(m.decay) << "\n";
    o << prefix << ".lower = " << format_number(m.lower) << "\n";
    o << prefix << ".upper = " << format_number(m.upper) << "\n";
  }
  if (!m.atoms.empty()) {
    o << prefix << ".atoms = ";
    for (std::size_t i = 0; i < m.atoms.size(); ++i)
      o << (i ? ", " : "") << format_number(m.atoms[i].location) << ":" << format_number(m.atoms[i].mass);
    o << "\n";
  }
}

}  // namespace

std::string emit_config(const RunConfig& c) {
  std::ostringstream o;
  o << "psi.form = " << c.psi.form << "\n";
  const std::string& pf = c.psi.form;
  if (pf != "stable") o << "psi.gamma = " << format_number(c.psi.gamma) << "\n";
  if (pf == "quadratic" || pf == "mixed" || pf == "triplet") o << "psi.sigma2 = " << format_number(c.psi.sigma2) << "\n";
  if (pf == "stable" || pf == "mixed") {
    o << "psi.d = " << format_number(c.psi.d) << "\n";
    o << "psi.alpha = " << format_number(c.psi.alpha) << "\n";
  }
  if (pf == "triplet") emit_measure(o, "psi.pi", c.psi.pi);

  o << "phi.form = " << c.phi.form << "\n";
  const std::string& ff = c.phi.form;
  if (ff == "linear" || ff == "triplet") o << "phi.b = " << format_number(c.phi.b) << "\n";
  if (ff == "stable") {
    o << "phi.dprime = " << format_number(c.phi.dprime) << "\n";
    o << "phi.beta = " << format_number(c.phi.beta) << "\n";
  }
  if (ff == "log_tail") {
    o << "phi.kind = " << c.phi.kind << "\n";
    if (c.phi.kind == "inverse_log") o << "phi.alpha = " << format_number(c.phi.alpha) << "\n";
  }
  if (ff == "triplet") emit_measure(o, "phi.nu", c.phi.nu);

  const auto& g = c.grid;
  if (!g.x.empty()) o << "grid.x = " << join(g.x) << "\n";
  if (!g.a.empty()) o << "grid.a = " << join(g.a) << "\n";
  if (!g.lambda.empty()) o << "grid.lambda = " << join(g.lambda) << "\n";
  if (!g.mu.empty()) o << "grid.mu = " << join(g.mu) << "\n";
  if (!g.t.empty()) o << "grid.t = " << join(g.t) << "\n";
  if (!g.q.empty()) o << "grid.q = " << join(g.q) << "\n";
  if (g.theta) o << "grid.theta = " << format_number(*g.theta) << "\n";
  o << "quad.tol = " << format_number(c.tol) << "\n";

  const auto& s = c.sim;
  o << "sim.scheme = " << sim::to_string(s.scheme) << "\n";
  o << "sim.dt = " << format_number(s.dt) << "\n";
  o << "sim.horizon = " << format_number(s.horizon) << "\n";
  o << "sim.paths = " << s.path_count << "\n";
  o << "sim.seed = " << s.seed << "\n";
  o << "sim.stream_offset = " << s.stream_offset << "\n";
  o << "sim.eps = " << format_number(s.small_jump_cutoff) << "\n";
  o << "sim.escape_factor = " << format_number(s.escape_factor) << "\n";
  o << "sim.gaussian_small_jumps = " << (s.gaussian_small_jumps ? "true" : "false") << "\n";
  o << "sim.workers = " << s.workers << "\n";
  o << "sim.estimand = ";
  for (std::size_t i = 0; i < c.estimands.size(); ++i) o << (i ? ", " : "") << c.estimands[i];
  o << "\n";
  if (!c.dump.empty()) o << "sim.dump = " << c.dump << "\n";
  if (c.dump_paths) o << "sim.dump_paths = " << c.dump_paths << "\n";
  if (!c.out_dir.empty()) o << "output.dir = " << c.out_dir << "\n";
  if (!c.verify_filter.empty()) o << "verify.filter = " << c.verify_filter << "\n";
  if (!c.verify_perturb.empty()) o << "verify.perturb = " << c.verify_perturb << "\n";
  if (c.verify_mc_scale != 1.0) o << "verify.mc_scale = " << format_number(c.verify_mc_scale) << "\n";
  return o.str();
}

}  // namespace cbi::cli
