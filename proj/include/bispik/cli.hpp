#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bispik {

// Subcommands: train-teacher, distill, train, generate, profile, eval,
// selftest. Returns the process exit status; failures print one line to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bispik
