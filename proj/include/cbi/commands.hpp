#pragma once

// The four CLI commands as library calls returning their report text, so the
// tests can drive them without a process boundary.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "cbi/config.hpp"

namespace cbi::cli {

enum ExitCode : int { kExitOk = 0, kExitVerifyFailed = 1, kExitConfigError = 2, kExitNumericFailure = 3 };

// JSON: criticality, longrun, boundary_polar, v, d, evidence, notes
std::string cmd_classify(const RunConfig& cfg);

struct Report {
  std::string text;
  int exit_code = kExitOk;
};

// kind: hitting | joint | total | marginal | minimum
Report cmd_laplace(const RunConfig& cfg, const std::string& kind);

struct SimulateReport {
  std::string summary;  // estimand,lambda,mu,mc_mean,stderr,n,censored_frac,seed,flagged
  std::string dump;     // path_id,t,x when cfg.dump is set
};
SimulateReport cmd_simulate(const RunConfig& cfg);

// Prints one line per check and a summary; exit code 1 on any failure.
int cmd_verify(const RunConfig& cfg, std::ostream& out, std::optional<std::uint64_t> seed = std::nullopt);

// Relative paths go under CBI_OUTPUT_DIR when set, else under output.dir.
std::string resolve_output_path(const std::string& path, const RunConfig& cfg);

}  // namespace cbi::cli
