#pragma once

#include <functional>
#include <string>
#include <vector>

namespace bispik {

struct CheckResult {
  std::string module;
  std::string name;
  bool passed = false;
  std::string detail;
};

// Fast invariant checks over every module; each check runs in isolation and
// an exception counts as a failure.
std::vector<CheckResult> run_selftest();

}  // namespace bispik
