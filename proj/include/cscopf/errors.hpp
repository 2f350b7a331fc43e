#pragma once

#include <stdexcept>
#include <string>

namespace cscopf {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input, invariant violations in user data, bad paths.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Input uses a feature of a file format this library does not model.
class UnsupportedFeature : public InputError {
 public:
  using InputError::InputError;
};

/// The network topology does not admit the requested computation
/// (islanded network, radial outage).
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cscopf
