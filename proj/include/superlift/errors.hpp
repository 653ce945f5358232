#pragma once

#include <stdexcept>
#include <string>

namespace superlift {

/// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejected configuration or model parameters (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical or domain failure: divergent moments, non-convergence,
/// arguments outside a function's domain (CLI exit code 3).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A random-variate generator exhausted its retry budget (CLI exit code 4).
class SamplerError : public Error {
 public:
  using Error::Error;
};

}  // namespace superlift
