#include "rpmix/error.hpp"

namespace rpmix {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::TooFewComponents: return "TooFewComponents";
    case ErrorKind::BadDims: return "BadDims";
    case ErrorKind::DegenerateDraw: return "DegenerateDraw";
    case ErrorKind::NotEnoughData: return "NotEnoughData";
    case ErrorKind::TooManyComponents: return "TooManyComponents";
    case ErrorKind::BadSeparation: return "BadSeparation";
    case ErrorKind::BadSpec: return "BadSpec";
    case ErrorKind::DuplicatePoints: return "DuplicatePoints";
    case ErrorKind::EmptyComponent: return "EmptyComponent";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InconsistentWidth: return "InconsistentWidth";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingData: return "MissingData";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace rpmix
