#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "cbi/commands.hpp"
#include "cbi/config.hpp"
#include "cbi/errors.hpp"

using namespace cbi::cli;

namespace {

int write_output(const std::string& text, const std::string& out, const RunConfig& cfg) {
  if (out.empty()) {
    std::cout << text;
    return kExitOk;
  }
  const std::string path = resolve_output_path(out, cfg);
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    std::cerr << "cannot write " << path << "\n";
    return kExitConfigError;
  }
  f << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CBI process transforms, classification and simulation"};
  app.require_subcommand(1);

  std::string config_path, out, kind = "hitting", filter, perturb;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<double> tol, mc_scale;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", config_path, "run configuration file");
    if (config_required) c->required();
    sub->add_option("--out", out, "output file (default stdout); relative paths honour CBI_OUTPUT_DIR");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--workers", workers, "Monte Carlo worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--tol", tol, "largest accepted quadrature error");
  };
  auto* classify = app.add_subcommand("classify", "criticality, recurrence and polarity report (JSON)");
  common(classify, true);
  auto* laplace = app.add_subcommand("laplace", "transform table (CSV)");
  common(laplace, true);
  laplace->add_option("--kind", kind, "hitting | joint | total | marginal | minimum")
      ->check(CLI::IsMember({"hitting", "joint", "total", "marginal", "minimum"}));
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimates (CSV) and optional path dump");
  common(simulate, true);
  auto* verify = app.add_subcommand("verify", "run the acceptance checks");
  common(verify, false);
  verify->add_option("--filter", filter, "run only checks whose name contains this");
  verify->add_option("--perturb", perturb, "shift the oracle constants of the matching check (harness self-test)");
  verify->add_option("--mc-scale", mc_scale, "multiply Monte Carlo path counts")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : parse_config_file(config_path);
    if (seed) cfg.sim.seed = *seed;
    if (workers) cfg.sim.workers = *workers;
    if (tol) cfg.tol = *tol;
    if (!filter.empty()) cfg.verify_filter = filter;
    if (!perturb.empty()) cfg.verify_perturb = perturb;
    if (mc_scale) cfg.verify_mc_scale = *mc_scale;

    if (*classify) return write_output(cmd_classify(cfg), out, cfg);
    if (*laplace) {
      const Report r = cmd_laplace(cfg, kind);
      const int w = write_output(r.text, out, cfg);
      return w ? w : r.exit_code;
    }
    if (*simulate) {
      const SimulateReport r = cmd_simulate(cfg);
      if (!cfg.dump.empty()) {
        const int w = write_output(r.dump, cfg.dump, cfg);
        if (w) return w;
      }
      return write_output(r.summary, out, cfg);
    }
    if (out.empty()) return cmd_verify(cfg, std::cout, seed);
    std::ofstream f(resolve_output_path(out, cfg));
    if (!f) {
      std::cerr << "cannot write " << out << "\n";
      return kExitConfigError;
    }
    return cmd_verify(cfg, f, seed);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfigError;
  } catch (const cbi::DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const cbi::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumericFailure;
  }
}
