#pragma once

#include <stdexcept>
#include <string>

namespace asrlab {

// Error taxonomy mirrors the CLI exit-code vocabulary:
//   ArgError / ConfigError / ParseError -> 2
//   IoError / FormatError              -> 3
//   TrainError                         -> 4
struct ArgError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : IoError {
  using IoError::IoError;
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace asrlab
