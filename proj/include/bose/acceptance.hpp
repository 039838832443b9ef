#pragma once

// The thirteen acceptance criteria as callable checks. Each one computes its
// numbers, compares them at the stated tolerance and reports a single
// pass/fail line; none of the tolerances depend on `quick`, which only
// shrinks sample counts for smoke runs.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bose/io.hpp"

namespace bose::acceptance {

inline constexpr int kCriterionCount = 13;

struct SuiteOptions {
  std::uint64_t seed = 20240611;
  bool quick = false;
  std::vector<int> criteria;  // empty: all
};

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;
  std::vector<io::ResultRecord> records;
};

std::string criterion_title(int id);
CriterionResult run_criterion(int id, const SuiteOptions& opt);
std::vector<CriterionResult> run_suite(const SuiteOptions& opt,
                                       const std::function<void(const CriterionResult&)>& progress = {});

/// "PASS  3 trace identity ... | details"
std::string format_line(const CriterionResult& r);

/// Deterministic text of a criterion's numbers (records and detail), used to
/// compare reruns byte for byte.
std::string numeric_fingerprint(const CriterionResult& r);

}  // namespace bose::acceptance
