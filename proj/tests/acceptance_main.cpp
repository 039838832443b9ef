// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//   acceptance [--quick] [--seed N] [criterion ids...]

#include <fmt/format.h>

#include <chrono>
#include <cstdlib>
#include <string>

#include "bose/acceptance.hpp"

int main(int argc, char** argv) {
  bose::acceptance::SuiteOptions opt;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--quick") {
      opt.quick = true;
    } else if (a == "--seed" && i + 1 < argc) {
      opt.seed = std::stoull(argv[++i]);
    } else {
      opt.criteria.push_back(std::stoi(a));
    }
  }
  int failed = 0;
  const auto t0 = std::chrono::steady_clock::now();
  bose::acceptance::run_suite(opt, [&](const bose::acceptance::CriterionResult& r) {
    failed += !r.pass;
    fmt::print("{}\n", bose::acceptance::format_line(r));
    std::fflush(stdout);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  fmt::print("{} criteria failed; {:.1f} s\n", failed, secs);
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
