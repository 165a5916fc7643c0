#pragma once

#include <stdexcept>
#include <string>

namespace mranchor {

enum class ErrorCode {
  InvalidArgument,
  NonMonotonicTimestamps,
  StreamMismatch,
  InsufficientMotion,
  DegenerateMotion,
  InsufficientPairs,
  InvalidDepth,
  DegenerateCorners,
  TooFewCorners,
  NoKnownMarkers,
  EmptyTrack,
  TooSparse,
  NoCorrespondences,
  EmptyROI,
  NotConverged,
  FrameMismatch,
  Io,
  Format,
};

const char* to_string(ErrorCode code) noexcept;

// I/O and format failures map to a different CLI exit code than domain errors.
inline bool is_io_error(ErrorCode code) noexcept {
  return code == ErrorCode::Io || code == ErrorCode::Format;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mranchor
