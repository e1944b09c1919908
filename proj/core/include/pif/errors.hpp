#pragma once

#include <stdexcept>
#include <string>

namespace pif {

/// Malformed or inconsistent configuration/input files. The CLI maps this
/// to exit code 1; everything else that escapes maps to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A tape operation produced NaN or Inf. Training loops catch this and
/// abort the run with a diagnostic instead of propagating garbage.
struct NonFiniteError : std::domain_error {
  using std::domain_error::domain_error;
};

}  // namespace pif
