#pragma once

#include <stdexcept>

namespace fryshort {

/// Invalid configuration (bad sizes, unknown enum values, inconsistent
/// options). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A runtime contract was broken (e.g. a held-out frame reaching a domain
/// loss). The CLI maps this to exit code 4.
struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fryshort
