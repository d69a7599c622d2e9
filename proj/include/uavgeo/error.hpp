#pragma once

#include <stdexcept>
#include <string>

namespace uavgeo {

/// Runtime failure inside a module (bad input data, I/O, divergence).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; the message names the offending line.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or command-line usage. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace uavgeo
