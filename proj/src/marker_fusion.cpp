#include "mranchor/marker_fusion.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mranchor/error.hpp"

namespace mranchor {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidArgument, "intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::InvalidArgument, "intrinsics: principal point outside the image");
  }
}

bool CameraIntrinsics::contains(const Eigen::Vector2d& pixel) const {
  return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width && pixel.y() < height;
}

int MarkerObservation::valid_count() const {
  return static_cast<int>(std::count(valid_depth.begin(), valid_depth.end(), true));
}

void MarkerRig::validate() const {
  if (!(marker_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "rig: marker_size must be positive");
  if (offsets.empty()) throw Error(ErrorCode::InvalidArgument, "rig: no marker offsets");
  intrinsics.validate();
}

Eigen::Vector3d backproject_corner(const Eigen::Vector2d& pixel, double depth, const CameraIntrinsics& k) {
  if (!std::isfinite(depth) || depth <= 0.0) {
    throw Error(ErrorCode::InvalidDepth, "backproject_corner: depth must be positive and finite");
  }
  return {(pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth};
}

Eigen::Vector2d project_point(const Eigen::Vector3d& point, const CameraIntrinsics& k) {
  return {k.fx * point.x() / point.z() + k.cx, k.fy * point.y() / point.z() + k.cy};
}

std::array<Eigen::Vector3d, 4> canonical_marker_corners(double marker_size) {
  const double h = 0.5 * marker_size;
  return {Eigen::Vector3d(-h, h, 0.0), Eigen::Vector3d(h, h, 0.0), Eigen::Vector3d(h, -h, 0.0),
          Eigen::Vector3d(-h, -h, 0.0)};
}

RigidTransform fit_marker_pose(const MarkerObservation& obs, double marker_size) {
  const auto model = canonical_marker_corners(marker_size);
  std::vector<Eigen::Vector3d> src;
  std::vector<Eigen::Vector3d> dst;
  for (int i = 0; i < 4; ++i) {
    if (!obs.valid_depth[i]) continue;
    if (!obs.corners_3d[i].allFinite()) throw Error(ErrorCode::InvalidDepth, "fit_marker_pose: non-finite corner");
    src.push_back(model[i]);
    dst.push_back(obs.corners_3d[i]);
  }
  if (src.size() < 3) {
    throw Error(ErrorCode::TooFewCorners, "fit_marker_pose: marker " + std::to_string(obs.marker_id) +
                                              " has " + std::to_string(src.size()) + " valid corners");
  }

  Eigen::Vector3d src_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d dst_mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= static_cast<double>(src.size());
  dst_mean /= static_cast<double>(dst.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  Eigen::MatrixXd centered(3, static_cast<Eigen::Index>(dst.size()));
  for (std::size_t i = 0; i < src.size(); ++i) {
    cov += (src[i] - src_mean) * (dst[i] - dst_mean).transpose();
    centered.col(static_cast<Eigen::Index>(i)) = dst[i] - dst_mean;
  }
  const Eigen::Vector3d spread = centered.jacobiSvd().singularValues();
  if (spread[1] < 1e-6) {
    throw Error(ErrorCode::DegenerateCorners, "fit_marker_pose: corners are collinear");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  return {r, dst_mean - r * src_mean};
}

FusedPose fuse_marker_poses(std::span<const MarkerObservation> observations, const MarkerRig& rig) {
  struct Candidate {
    int id;
    RigidTransform pose;
    double weight;
  };
  std::vector<Candidate> candidates;
  bool any_known = false;
  for (const auto& obs : observations) {
    const auto offset = rig.offsets.find(obs.marker_id);
    if (offset == rig.offsets.end()) continue;
    any_known = true;
    if (obs.valid_count() < 3) continue;
    RigidTransform marker_pose;
    try {
      marker_pose = fit_marker_pose(obs, rig.marker_size);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DegenerateCorners || e.code() == ErrorCode::InvalidDepth) continue;
      throw;
    }
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    int n = 0;
    for (int i = 0; i < 4; ++i) {
      if (obs.valid_depth[i]) {
        center += obs.corners_3d[i];
        ++n;
      }
    }
    center /= n;
    const double d2 = center.squaredNorm();
    if (!(d2 > 0.0)) continue;
    candidates.push_back({obs.marker_id, marker_pose * offset->second, 1.0 / d2});
  }
  if (!any_known) throw Error(ErrorCode::NoKnownMarkers, "fuse_marker_poses: no observation matches the rig");
  if (candidates.empty()) throw Error(ErrorCode::TooFewCorners, "fuse_marker_poses: no marker has 3 usable corners");

  double total = 0.0;
  for (const auto& c : candidates) total += c.weight;
  const auto& reference =
      *std::max_element(candidates.begin(), candidates.end(),
                        [](const Candidate& a, const Candidate& b) { return a.weight < b.weight; });

  FusedPose fused;
  fused.timestamp = observations.front().timestamp;
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Vector4d q = Eigen::Vector4d::Zero();
  for (const auto& c : candidates) {
    const double w = c.weight / total;
    t += w * c.pose.translation();
    q += w * align_hemisphere(c.pose.rotation(), reference.pose.rotation()).coeffs();
    fused.contributing_markers.emplace_back(c.id, w);
  }
  Eigen::Quaterniond mean;
  mean.coeffs() = q;
  fused.pose = RigidTransform(mean, t);
  return fused;
}

// ---------------------------------------------------------------------------

void OneEuroParams::validate() const {
  if (!(min_cutoff > 0.0) || !(d_cutoff > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "one-euro: cutoffs must be positive");
  }
  if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "one-euro: beta must be non-negative");
}

double one_euro_alpha(double cutoff, double dt) {
  const double tau = 1.0 / (2.0 * std::numbers::pi * cutoff);
  return 1.0 / (1.0 + tau / dt);
}

std::pair<OneEuroState, FusedPose> one_euro_step(const OneEuroState& state, const FusedPose& sample) {
  state.params.validate();
  OneEuroState next = state;
  FusedPose out = sample;
  out.filtered = true;

  Eigen::Quaterniond q = sample.pose.rotation();
  std::array<double, 7> x{};
  if (state.initialized) {
    Eigen::Quaterniond prev(state.value[3], state.value[4], state.value[5], state.value[6]);
    q = align_hemisphere(q, prev);
  }
  const Eigen::Vector3d& p = sample.pose.translation();
  x = {p.x(), p.y(), p.z(), q.w(), q.x(), q.y(), q.z()};

  if (!state.initialized) {
    next.initialized = true;
    next.value = x;
    next.derivative.fill(0.0);
  } else {
    const double dt = sample.timestamp - state.last_timestamp;
    if (!(dt > 0.0)) throw Error(ErrorCode::NonMonotonicTimestamps, "one_euro_step: timestamp not increasing");
    const double a_d = one_euro_alpha(state.params.d_cutoff, dt);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double dx = (x[i] - state.value[i]) / dt;
      next.derivative[i] = state.derivative[i] + a_d * (dx - state.derivative[i]);
      const double cutoff = state.params.min_cutoff + state.params.beta * std::abs(next.derivative[i]);
      const double a = one_euro_alpha(cutoff, dt);
      next.value[i] = state.value[i] + a * (x[i] - state.value[i]);
    }
  }
  next.last_timestamp = sample.timestamp;

  const Eigen::Quaterniond filtered_q(next.value[3], next.value[4], next.value[5], next.value[6]);
  out.pose = RigidTransform(filtered_q, Eigen::Vector3d(next.value[0], next.value[1], next.value[2]));
  return {next, out};
}

// ---------------------------------------------------------------------------

JitterStats jitter_stats(std::span<const std::optional<RigidTransform>> track, const JitterThresholds& thresholds) {
  if (track.size() < 2) throw Error(ErrorCode::EmptyTrack, "jitter_stats: need at least 2 frames");
  JitterStats s;
  s.frames_total = track.size();
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (!track[i]) {
      ++s.frames_lost;
      continue;
    }
    if (i == 0 || !track[i - 1]) continue;
    ++s.detected_pairs;
    const PoseError step = pose_error(*track[i], *track[i - 1]);
    if (step.translation_error > thresholds.translation || step.rotation_error > thresholds.rotation) {
      ++s.jitter_transitions;
    }
  }
  s.marker_loss_rate = static_cast<double>(s.frames_lost) / static_cast<double>(s.frames_total);
  s.pose_jitter_rate =
      s.detected_pairs == 0 ? 0.0 : static_cast<double>(s.jitter_transitions) / static_cast<double>(s.detected_pairs);
  return s;
}

// ---------------------------------------------------------------------------

std::vector<TrackingFrame> group_frames(std::span<const MarkerObservation> log, std::span<const double> frame_times) {
  std::vector<TrackingFrame> frames;
  if (!frame_times.empty()) {
    frames.reserve(frame_times.size());
    for (double t : frame_times) frames.push_back({t, {}});
    for (const auto& obs : log) {
      auto it = std::lower_bound(frame_times.begin(), frame_times.end(), obs.timestamp - 1e-6);
      if (it == frame_times.end() || std::abs(*it - obs.timestamp) > 1e-6) {
        throw Error(ErrorCode::StreamMismatch,
                    "group_frames: observation at t=" + std::to_string(obs.timestamp) + " matches no frame");
      }
      frames[static_cast<std::size_t>(it - frame_times.begin())].observations.push_back(obs);
    }
    return frames;
  }
  for (const auto& obs : log) {
    if (frames.empty() || obs.timestamp > frames.back().timestamp) {
      frames.push_back({obs.timestamp, {}});
    } else if (obs.timestamp < frames.back().timestamp) {
      throw Error(ErrorCode::NonMonotonicTimestamps, "group_frames: observation log is not time-ordered");
    }
    frames.back().observations.push_back(obs);
  }
  return frames;
}

TrackingOutput track_markers(std::span<const TrackingFrame> frames, const MarkerRig& rig, const OneEuroParams& params) {
  rig.validate();
  params.validate();
  TrackingOutput out;
  out.raw.reserve(frames.size());
  out.filtered.reserve(frames.size());
  out.frame_seconds.reserve(frames.size());
  OneEuroState state;
  state.params = params;
  for (const auto& frame : frames) {
    const auto start = std::chrono::steady_clock::now();
    std::optional<FusedPose> raw;
    std::optional<FusedPose> filtered;
    if (!frame.observations.empty()) {
      try {
        raw = fuse_marker_poses(frame.observations, rig);
        raw->timestamp = frame.timestamp;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoKnownMarkers && e.code() != ErrorCode::TooFewCorners) throw;
      }
    }
    if (raw) {
      auto [next, smoothed] = one_euro_step(state, *raw);
      state = next;
      filtered = std::move(smoothed);
    }
    const auto stop = std::chrono::steady_clock::now();
    out.raw.push_back(std::move(raw));
    out.filtered.push_back(std::move(filtered));
    out.frame_seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  return out;
}

}  // namespace mranchor
