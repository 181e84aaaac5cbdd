#pragma once

#include <stdexcept>
#include <string>

namespace nervboost {

/// Invalid user-facing configuration (indivisible resolution, unreachable size target, bad flag).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor shapes that do not line up with the layer or model they are fed to.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File system and image decoding failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a training loss turns non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DecodeErrorKind {
  BadMagic,
  UnsupportedVersion,
  Truncated,
  CorruptHeader,
  RangeMismatch,
  CorruptPayload,
  ConfigHashMismatch,
};

const char* to_string(DecodeErrorKind kind);

/// Bitstream and checkpoint parsing failures. `kind()` tells them apart.
class DecodeError : public IoError {
 public:
  DecodeError(DecodeErrorKind kind, const std::string& what)
      : IoError(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  DecodeErrorKind kind() const { return kind_; }

 private:
  DecodeErrorKind kind_;
};

}  // namespace nervboost
