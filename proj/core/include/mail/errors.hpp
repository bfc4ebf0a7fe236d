#pragma once

#include <stdexcept>
#include <string>

namespace mail {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A block or run configuration is invalid (bad group count, unknown key...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An object was used in a state that does not support the request.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API contract (non-scalar loss, wrong modality count...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN / Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Labels or samples are inconsistent with the declared dataset schema.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A metric is mathematically undefined for the given input.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary container or checkpoint.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Filesystem failure while reading or writing artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mail
