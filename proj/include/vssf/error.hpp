#pragma once

#include <stdexcept>
#include <string>

namespace vssf {

enum class ErrorKind {
  kDimensionMismatch,
  kNotPositiveDefinite,
  kNotStable,
  kNonFinite,
  kUnknownSensor,
  kShapeMismatch,
  kNotScalarRoot,
  kAlreadyConsumed,
  kConfigMismatch,
  kMissingGroundTruth,
  kIoError,
  kBadMagic,
  kUnsupportedVersion,
  kCorruptHeader,
  kBadFlag,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace vssf
