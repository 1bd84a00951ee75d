#include "vssf/error.hpp"

namespace vssf {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::kNotStable: return "NotStable";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kUnknownSensor: return "UnknownSensor";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNotScalarRoot: return "NotScalarRoot";
    case ErrorKind::kAlreadyConsumed: return "AlreadyConsumed";
    case ErrorKind::kConfigMismatch: return "ConfigMismatch";
    case ErrorKind::kMissingGroundTruth: return "MissingGroundTruth";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kBadMagic: return "BadMagic";
    case ErrorKind::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::kCorruptHeader: return "CorruptHeader";
    case ErrorKind::kBadFlag: return "BadFlag";
  }
  return "Unknown";
}

}  // namespace vssf
