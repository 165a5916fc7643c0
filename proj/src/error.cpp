#include "mranchor/error.hpp"

namespace mranchor {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::StreamMismatch: return "StreamMismatch";
    case ErrorCode::InsufficientMotion: return "InsufficientMotion";
    case ErrorCode::DegenerateMotion: return "DegenerateMotion";
    case ErrorCode::InsufficientPairs: return "InsufficientPairs";
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::DegenerateCorners: return "DegenerateCorners";
    case ErrorCode::TooFewCorners: return "TooFewCorners";
    case ErrorCode::NoKnownMarkers: return "NoKnownMarkers";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::TooSparse: return "TooSparse";
    case ErrorCode::NoCorrespondences: return "NoCorrespondences";
    case ErrorCode::EmptyROI: return "EmptyROI";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

}  // namespace mranchor
