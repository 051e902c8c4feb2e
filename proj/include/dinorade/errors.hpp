#pragma once

#include <stdexcept>
#include <string>

namespace dinorade {

/// Base of every error thrown by the library. The CLI maps the subclasses
/// onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or incompatible shapes between components.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, malformed or inconsistent data on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Frame-file parse failures. The kind distinguishes the failure modes a
/// reader must be able to tell apart.
class FormatError : public DataError {
 public:
  enum class Kind { kMalformedHeader, kDimension, kTruncated };

  FormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace dinorade
