#pragma once

#include <stdexcept>
#include <string>

namespace fnr {

// Base class for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor dimensions do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// An API precondition was violated (bad node id, non-scalar loss, b < 2, ...).
struct ContractError : Error {
  using Error::Error;
};

// Malformed or inconsistent dataset / checkpoint contents.
struct DataError : Error {
  using Error::Error;
};

// NaN/Inf surfaced where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

// Bad run configuration (unknown key, missing file, invalid value).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace fnr
