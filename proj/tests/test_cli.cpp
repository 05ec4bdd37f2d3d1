#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cbi/commands.hpp"
#include "cbi/config.hpp"

using namespace cbi;
using namespace cbi::cli;

namespace {

const char* kCir = R"(# recurrent CIR
psi.form = quadratic
psi.sigma2 = 2
phi.form = linear
phi.b = 0.5
grid.x = 2
grid.a = 1, 0.5
grid.lambda = 0.5, 1
grid.mu = 0.25
sim.paths = 400
sim.horizon = 20
sim.seed = 9
)";

std::vector<std::vector<std::string>> csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::filesystem::path scratch() {
  auto d = std::filesystem::temp_directory_path() / "cbi_cli_test";
  std::filesystem::create_directories(d);
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CBI_CLI_PATH) + " " + args + " > " + (scratch() / "stdout.txt").string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string write_config(const std::string& name, const std::string& text) {
  const auto p = scratch() / name;
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_CASE("config parses to the declared model") {
  const auto cfg = parse_config_string(kCir);
  const auto m = cfg.model();
  CHECK(m.psi()(2.0) == doctest::Approx(4.0));
  CHECK(m.phi()(2.0) == doctest::Approx(1.0));
  CHECK(cfg.grid.a == std::vector<double>{1.0, 0.5});
  CHECK(cfg.sim.path_count == 400u);
}

TEST_CASE("emitted config round-trips") {
  const std::vector<std::string> texts{
      kCir,
      "psi.form = stable\npsi.d = 1\npsi.alpha = 1.5\nphi.form = stable\nphi.dprime = 0.5\nphi.beta = 0.5\n",
      "psi.form = triplet\npsi.gamma = 0.3\npsi.pi.density = tempered\npsi.pi.rho = 0.4\npsi.pi.decay = 2\n"
      "psi.pi.atoms = 0.5:1, 2:0.25\nphi.form = log_tail\nphi.kind = inverse_log\nphi.alpha = 2\n",
      "psi.form = mixed\npsi.gamma = -1\npsi.sigma2 = 2\npsi.d = 0.1\npsi.alpha = 1.2\nphi.form = conditioned\n"
      "grid.theta = 3\nquad.tol = 1e-8\nsim.scheme = euler\nsim.eps = 0.01\n",
  };
  for (const auto& t : texts) {
    const auto a = parse_config_string(t);
    const std::string e = emit_config(a);
    const auto b = parse_config_string(e);
    CHECK(emit_config(b) == e);
    for (double q : {0.1, 1.0, 7.0}) {
      CHECK(a.model().psi()(q) == b.model().psi()(q));
      CHECK(a.model().phi()(q) == b.model().phi()(q));
    }
  }
}

TEST_CASE("config diagnostics name the line and key") {
  auto fails_at = [](const std::string& text, int line, const std::string& key) {
    try {
      parse_config_string(text, "t.cfg");
      FAIL("no error for: " << text);
    } catch (const ConfigError& e) {
      CHECK(e.line() == line);
      CHECK(e.key() == key);
    }
  };
  fails_at("psi.form = quadratic\npsi.sigmaa = 2\n", 2, "psi.sigmaa");
  fails_at("psi.form = quadratic\n\npsi.sigma2 = two\n", 3, "psi.sigma2");
  fails_at("psi.form = cubic\n", 1, "psi.form");
  fails_at("psi.form = stable\npsi.d = 1\npsi.alpha = 2.5\n", 1, "psi.form");
  fails_at("psi.form = quadratic\npsi.sigma2 = 1\npsi.sigma2 = 2\n", 3, "psi.sigma2");
  fails_at("grid.x = 1,,2\n", 1, "grid.x");
  fails_at("no equals sign\n", 1, "");
}

TEST_CASE("classify report") {
  auto cfg = parse_config_string("psi.form = quadratic\npsi.sigma2 = 2\nphi.form = linear\nphi.b = 1\n");
  auto j = nlohmann::json::parse(cmd_classify(cfg));
  CHECK(j["criticality"] == "Critical");
  CHECK(j["longrun"] == "NullRecurrent");
  CHECK(j["boundary_polar"] == "Polar");
  CHECK(j["d"] == "inf");
  CHECK(j["evidence"].size() > 0);
  cfg = parse_config_string("psi.form = stable\npsi.d = 1\npsi.alpha = 1.5\nphi.form = stable\nphi.dprime = 1\nphi.beta = 0.7\n");
  j = nlohmann::json::parse(cmd_classify(cfg));
  CHECK(j["longrun"] == "PositiveRecurrent");
  CHECK(j["boundary_polar"] == "Polar");
  cfg = parse_config_string("psi.form = mixed\npsi.gamma = -1\npsi.sigma2 = 2\nphi.form = linear\nphi.b = 0.3\n");
  CHECK(nlohmann::json::parse(cmd_classify(cfg))["longrun"] == "Transient");
}

TEST_CASE("laplace tables") {
  auto cfg = parse_config_string("psi.form = quadratic\npsi.sigma2 = 1\nphi.form = zero\ngrid.x = 2\ngrid.a = 1\ngrid.mu = 2\n");
  auto r = cmd_laplace(cfg, "total");
  auto rows = csv(r.text);
  CHECK(r.exit_code == kExitOk);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"x", "a", "lambda", "mu", "value", "abs_err", "status"});
  CHECK(std::abs(std::stod(rows[1][4]) - std::exp(-2.0)) < 1e-6);

  cfg = parse_config_string("psi.form = quadratic\npsi.sigma2 = 1\nphi.form = conditioned\ngrid.x = 1\ngrid.a = 0.25, 0.5, 0.75\n");
  rows = csv(cmd_laplace(cfg, "minimum").text);
  REQUIRE(rows.size() == 4);
  for (int i = 1; i <= 3; ++i) CHECK(std::abs(std::stod(rows[i][4]) - 0.25 * i) < 1e-6);

  cfg = parse_config_string(kCir);
  cfg.grid.a = {3.0};
  rows = csv(cmd_laplace(cfg, "hitting").text);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][6] == "domain_error");

  cfg = parse_config_string("psi.form = quadratic\npsi.sigma2 = 2\nphi.form = linear\nphi.b = 1\ngrid.x = 1\ngrid.t = 1\ngrid.q = 1\n");
  rows = csv(cmd_laplace(cfg, "marginal").text);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][0] == "x");
  CHECK(rows[0][1] == "t");
  CHECK(std::abs(std::stod(rows[1][3]) - std::exp(-0.5) / 2.0) < 1e-9);
}

TEST_CASE("simulate summaries") {
  auto cfg = parse_config_string(kCir);
  cfg.estimands = {"hitting", "joint"};
  const auto a = cmd_simulate(cfg);
  const auto b = cmd_simulate(cfg);
  CHECK(a.summary == b.summary);
  const auto rows = csv(a.summary);
  CHECK(rows[0] == std::vector<std::string>{"estimand", "lambda", "mu", "mc_mean", "stderr", "n", "censored_frac",
                                             "seed", "flagged"});
  // 2 levels x 2 lambdas, then the same with one mu
  CHECK(rows.size() == 1 + 4 + 4);
  CHECK(rows[1][0] == "hitting:x=2;a=1");
  auto r = cmd_laplace(cfg, "hitting");
  const auto q = csv(r.text);
  for (int i = 1; i <= 4; ++i) {
    const double mc = std::stod(rows[i][3]), se = std::stod(rows[i][4]), exact = std::stod(q[i][4]);
    CHECK(std::abs(mc - exact) < 3.0 * se + 1e-12);
  }
  cfg.sim.seed = 10;
  CHECK(cmd_simulate(cfg).summary != a.summary);
}

TEST_CASE("path dump") {
  auto cfg = parse_config_string(kCir);
  cfg.dump = "paths.csv";
  cfg.dump_paths = 3;
  cfg.sim.horizon = 0.5;
  cfg.sim.dt = 0.01;
  const auto r = cmd_simulate(cfg);
  const auto rows = csv(r.dump);
  CHECK(rows[0] == std::vector<std::string>{"path_id", "t", "x"});
  CHECK(rows.size() == 1 + 3 * (cfg.sim.step_count() + 1));
}

TEST_CASE("output directory override") {
  RunConfig cfg;
  cfg.out_dir = "runs";
  ::unsetenv("CBI_OUTPUT_DIR");
  CHECK(resolve_output_path("a.csv", cfg) == "runs/a.csv");
  CHECK(resolve_output_path("/abs/a.csv", cfg) == "/abs/a.csv");
  ::setenv("CBI_OUTPUT_DIR", "/tmp/o", 1);
  CHECK(resolve_output_path("a.csv", cfg) == "/tmp/o/a.csv");
  ::unsetenv("CBI_OUTPUT_DIR");
}

TEST_CASE("verify filter and self-test") {
  RunConfig cfg;
  cfg.verify_filter = "total_population";
  std::ostringstream out;
  CHECK(cmd_verify(cfg, out) == kExitOk);
  const std::string s = out.str();
  CHECK(s.find("[01]") != std::string::npos);
  CHECK(s.find("[02]") != std::string::npos);
  CHECK(s.find("[03]") == std::string::npos);
  cfg.verify_perturb = "total_population_conditioned";
  std::ostringstream bad;
  CHECK(cmd_verify(cfg, bad) == kExitVerifyFailed);
  CHECK(bad.str().find("PASS [01]") != std::string::npos);
  CHECK(bad.str().find("FAIL [02]") != std::string::npos);
  for (const char* name : {"classification", "theta", "invariant", "recurrent", "supercritical"}) {
    RunConfig c;
    c.verify_filter = name;
    c.verify_perturb = name;
    std::ostringstream o;
    CHECK_MESSAGE(cmd_verify(c, o) == kExitVerifyFailed, name);
  }
}

TEST_CASE("perturbed Monte Carlo checks fail at reduced scale") {
  for (const char* name : {"minimum", "mc_", "flow", "lower_bound"}) {
    RunConfig c;
    c.verify_filter = name;
    c.verify_perturb = name;
    c.verify_mc_scale = 0.05;
    std::ostringstream o;
    CHECK_MESSAGE(cmd_verify(c, o) == kExitVerifyFailed, name);
  }
}

TEST_CASE("command-line exit codes") {
  const auto cfg = write_config("cir.cfg", kCir);
  CHECK(run_cli("classify --config " + cfg) == 0);
  CHECK(nlohmann::json::parse(slurp(scratch() / "stdout.txt"))["longrun"] == "NullRecurrent");
  CHECK(run_cli("laplace --kind hitting --config " + cfg) == 0);
  CHECK(csv(slurp(scratch() / "stdout.txt")).size() == 5);
  const auto out = (scratch() / "sim.csv").string();
  CHECK(run_cli("simulate --config " + cfg + " --seed 5 --out " + out) == 0);
  const std::string first = slurp(out);
  CHECK(run_cli("simulate --config " + cfg + " --seed 5 --workers 2 --out " + out) == 0);
  CHECK(slurp(out) == first);
  CHECK(run_cli("verify --filter recurrent_limit") == 0);
  CHECK(run_cli("verify --filter recurrent_limit --perturb recurrent_limit") == 1);
  CHECK(run_cli("classify --config " + write_config("bad.cfg", "psi.form = quadratic\npsi.sigma2 = -1\n")) == 2);
  CHECK(slurp(scratch() / "stdout.txt").find("bad.cfg:1") != std::string::npos);
  CHECK(run_cli("classify --config /nonexistent.cfg") == 2);
  CHECK(run_cli("laplace --kind cubic --config " + cfg) == 2);
  // tolerance below the achievable quadrature error
  CHECK(run_cli("laplace --kind hitting --tol 1e-300 --config " + cfg) == 3);
  CHECK(slurp(scratch() / "stdout.txt").find("tolerance_exceeded") != std::string::npos);
}
