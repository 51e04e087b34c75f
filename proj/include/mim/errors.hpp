#pragma once

#include <stdexcept>
#include <string>

namespace mim {

// Error taxonomy mirrors the CLI exit codes:
//   config_error -> 2, numerical_error -> 3, ingest_error -> 4.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ingest_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mim
