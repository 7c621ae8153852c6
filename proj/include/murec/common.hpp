#pragma once

#include <stdexcept>
#include <string>

namespace murec {

// Invalid or inconsistent configuration supplied by the caller.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input data (files, wire formats).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The evaluation protocol cannot be satisfied (e.g. candidate pool too small).
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace murec
