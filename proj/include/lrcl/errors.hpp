#pragma once

#include <stdexcept>
#include <string>

namespace lrcl {

// Bad flags, bad config files, bad key=value overrides.  CLI exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A property/invariant suite found a violation.  CLI exit code 2.
struct CheckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed numeric preconditions at runtime.  CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lrcl
