#pragma once

// Run configuration: a line-oriented `key = value` text format with dotted keys
// and `#` comments. One schema serves every command; see README for the keys.

#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbi/mechanism.hpp"
#include "cbi/sim.hpp"

namespace cbi::cli {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& key, const std::string& msg);
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

// A Levy measure as the config can express it: an optional tempered power-law
// density scale * u^{-1-rho} * exp(-decay u) on [lower, upper] plus atoms.
struct MeasureSpec {
  bool density = false;
  double scale = 1.0, rho = 0.5, decay = 0.0;
  double lower = 0.0, upper = kInf;
  std::vector<Atom> atoms;

  LevyMeasure build() const;
};

struct PsiSpec {
  std::string form = "quadratic";  // linear | quadratic | stable | mixed | triplet
  double gamma = 0.0, sigma2 = 0.0, d = 0.0, alpha = 1.5;
  MeasureSpec pi;

  BranchingMechanism build() const;
};

struct PhiSpec {
  std::string form = "zero";  // zero | linear | stable | conditioned | triplet | log_tail
  double b = 0.0, dprime = 0.0, beta = 0.5;
  std::string kind = "inverse_loglog";  // log_tail only
  double alpha = 1.0;                   // log_tail inverse_log only
  MeasureSpec nu;

  ImmigrationMechanism build(const BranchingMechanism& psi) const;
};

struct Grids {
  std::vector<double> x, a, lambda, mu, t, q;
  std::optional<double> theta;
};

struct RunConfig {
  std::string source = "<config>";
  PsiSpec psi;
  PhiSpec phi;
  Grids grid;
  double tol = 1e-6;  // largest abs_err accepted in a laplace row
  sim::SimConfig sim;
  std::vector<std::string> estimands{"hitting"};
  std::string dump;  // path dump file, empty for none
  std::size_t dump_paths = 0;  // 0: all paths
  std::string out_dir;
  std::string verify_filter, verify_perturb;
  double verify_mc_scale = 1.0;

  std::map<std::string, int> key_lines;  // where each key was set

  CBIModel model() const;  // ConfigError pointing at the offending key
};

RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig parse_config_string(const std::string& text, const std::string& source = "<string>");
RunConfig parse_config_file(const std::string& path);

// Canonical text: only the keys relevant to the declared forms, fixed order,
// shortest round-trip number formatting.
std::string emit_config(const RunConfig& cfg);

std::string format_number(double v);

}  // namespace cbi::cli
