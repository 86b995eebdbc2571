#pragma once

#include <stdexcept>

namespace convonet {

// Problems the user can fix: missing files, malformed inputs, bad flag
// values, configs that cannot be built. The CLI maps these to exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace convonet
