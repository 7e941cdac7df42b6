#pragma once

#include <stdexcept>
#include <string>

namespace maskctrl {

// Base for every error raised by the library. Precondition violations on
// plain arguments use std::invalid_argument / std::out_of_range instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid sampler / experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A probability object failed its invariants (non-stochastic row, zero mass).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Remote backend could not be reached after all retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Remote backend answered with something that does not follow the wire format.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A model query failed inside the sampler; carries the step at which it happened.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace maskctrl
