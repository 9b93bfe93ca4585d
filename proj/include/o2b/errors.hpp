#pragma once

#include <stdexcept>

namespace o2b {

// Configuration problems (bad prior/backend pairing, unsupported dimension,
// malformed experiment setup) as opposed to domain errors on numeric inputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace o2b
