#pragma once

#include <stdexcept>

namespace vdfp {

/// A training quantity became non-finite or exceeded its divergence bound.
/// The message carries the diagnostics; runs abort with a nonzero status.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vdfp
