#pragma once

#include <stdexcept>
#include <string>

namespace cnnsplit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary container or text artifact.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, version_mismatch, truncated, invalid };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Invalid user-supplied configuration (flags, spec text, search settings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace cnnsplit
