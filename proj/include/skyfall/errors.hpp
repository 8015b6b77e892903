#pragma once

#include <stdexcept>
#include <string>

namespace skyfall {

// Failure categories map 1:1 onto CLI exit codes (usage errors are
// handled by the argument parser itself).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace skyfall
