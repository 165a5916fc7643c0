#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mranchor/error.hpp"
#include "mranchor/geometry.hpp"

namespace mranchor::detail {

inline void require_increasing(std::span<const TimedPose> stream, const char* name) {
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (!(stream[i].timestamp > stream[i - 1].timestamp)) {
      throw Error(ErrorCode::NonMonotonicTimestamps,
                  std::string(name) + ": timestamps not strictly increasing at index " + std::to_string(i));
    }
  }
}

// For every sample of `primary`, the index of the nearest-in-time sample of
// `secondary`. Fails with StreamMismatch when a sample has no partner within
// `tolerance` seconds or when two samples claim the same partner.
inline std::vector<std::size_t> match_streams(std::span<const TimedPose> primary,
                                              std::span<const TimedPose> secondary, double tolerance) {
  if (primary.empty() || secondary.empty()) {
    throw Error(ErrorCode::StreamMismatch, "stream matching: empty stream");
  }
  require_increasing(primary, "primary stream");
  require_increasing(secondary, "secondary stream");

  std::vector<std::size_t> out(primary.size());
  for (std::size_t i = 0; i < primary.size(); ++i) {
    const double t = primary[i].timestamp;
    auto it = std::lower_bound(secondary.begin(), secondary.end(), t,
                               [](const TimedPose& p, double v) { return p.timestamp < v; });
    std::size_t best = static_cast<std::size_t>(it - secondary.begin());
    if (best == secondary.size() ||
        (best > 0 && std::abs(secondary[best - 1].timestamp - t) <= std::abs(secondary[best].timestamp - t))) {
      --best;
    }
    if (std::abs(secondary[best].timestamp - t) > tolerance) {
      throw Error(ErrorCode::StreamMismatch,
                  "stream matching: no partner within tolerance for t=" + std::to_string(t));
    }
    if (i > 0 && best == out[i - 1]) {
      throw Error(ErrorCode::StreamMismatch, "stream matching: two samples share one partner");
    }
    out[i] = best;
  }
  return out;
}

}  // namespace mranchor::detail
