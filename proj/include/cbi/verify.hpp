#pragma once

// The acceptance suite: twelve oracle and property checks over the transform,
// classification and simulation layers. Shared by `cbi verify` and the
// acceptance test binary.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace cbi::verify {

struct SuiteOptions {
  std::string filter;   // substring of a check name; empty runs all
  std::string perturb;  // check whose oracle constants get shifted (harness self-test)
  double mc_scale = 1.0;  // path counts are multiplied by this; runtime limits apply only at 1
  unsigned workers = 1;
  std::uint64_t seed = 20150301;
};

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct CheckInfo {
  int id;
  std::string name;
  std::string description;
};

const std::vector<CheckInfo>& checks();

// Runs the selected checks in id order; each result line is written to `log`
// as soon as its check finishes.
std::vector<CheckResult> run_suite(const SuiteOptions& opt, std::ostream* log = nullptr);

std::string format_result(const CheckResult& r);

}  // namespace cbi::verify
