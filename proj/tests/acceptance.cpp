// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.

#include <cstdio>
#include <iostream>

#include "cbi/verify.hpp"

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const auto results = cbi::verify::run_suite({}, &std::cout);
  std::size_t passed = 0;
  for (const auto& r : results) passed += r.passed;
  std::cout << passed << "/" << results.size() << " acceptance criteria passed" << std::endl;
  return passed == results.size() && results.size() == 12 ? 0 : 1;
}
