#pragma once

#include <stdexcept>
#include <string>

namespace bispik {

// Error categories surfaced by the public API. All derive from
// std::runtime_error so callers that do not care can catch one type.

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AlignmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bispik
