#pragma once

// Fiducial-marker tracking of the maternal manikin: depth backprojection of
// detected corners, per-marker rigid fit, inverse-square-distance fusion of
// the per-marker model candidates, one-euro smoothing, and jitter statistics.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mranchor/geometry.hpp"

namespace mranchor {

struct CameraIntrinsics {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  void validate() const;
  bool contains(const Eigen::Vector2d& pixel) const;
};

struct MarkerObservation {
  int marker_id = 0;
  double timestamp = 0.0;
  // Canonical winding: top-left, top-right, bottom-right, bottom-left as seen
  // facing the marker.
  std::array<Eigen::Vector2d, 4> corners_2d{};
  std::array<Eigen::Vector3d, 4> corners_3d{};
  std::array<bool, 4> valid_depth{};

  int valid_count() const;
};

struct MarkerRig {
  double marker_size = 0.08;
  // marker id -> pose of the model in that marker's frame
  std::map<int, RigidTransform> offsets;
  CameraIntrinsics intrinsics;

  void validate() const;
};

struct FusedPose {
  double timestamp = 0.0;
  RigidTransform pose;  // model pose in the camera frame
  std::vector<std::pair<int, double>> contributing_markers;  // id, normalized weight
  bool filtered = false;
};

Eigen::Vector3d backproject_corner(const Eigen::Vector2d& pixel, double depth, const CameraIntrinsics& k);
Eigen::Vector2d project_point(const Eigen::Vector3d& point, const CameraIntrinsics& k);

/// Corners of a square marker of the given side, centered at the origin in
/// the z = 0 plane, in canonical winding.
std::array<Eigen::Vector3d, 4> canonical_marker_corners(double marker_size);

/// Least-squares rigid fit (no scale) of the canonical corners onto the
/// valid-depth 3D corners. Returns the marker pose in the camera frame.
RigidTransform fit_marker_pose(const MarkerObservation& obs, double marker_size);

/// Fuses all observations of one frame whose ids appear in the rig.
/// Markers with fewer than 3 usable corners are skipped.
FusedPose fuse_marker_poses(std::span<const MarkerObservation> observations, const MarkerRig& rig);

// ---------------------------------------------------------------------------
// One-euro filter

struct OneEuroParams {
  double min_cutoff = 1.0;  // Hz
  double beta = 0.05;
  double d_cutoff = 1.0;  // Hz

  void validate() const;
};

struct OneEuroState {
  OneEuroParams params;
  bool initialized = false;
  double last_timestamp = 0.0;
  // translation x,y,z followed by quaternion w,x,y,z
  std::array<double, 7> value{};
  std::array<double, 7> derivative{};
};

/// Smoothing factor of a first-order low-pass with the given cutoff at
/// sample period dt.
double one_euro_alpha(double cutoff, double dt);

/// Advances the filter by one sample. The input state is not modified.
std::pair<OneEuroState, FusedPose> one_euro_step(const OneEuroState& state, const FusedPose& sample);

// ---------------------------------------------------------------------------
// Jitter statistics

struct JitterThresholds {
  double translation = 0.005;         // meters
  double rotation = deg2rad(5.0);     // radians
};

struct JitterStats {
  double marker_loss_rate = 0.0;
  double pose_jitter_rate = 0.0;
  std::size_t frames_total = 0;
  std::size_t frames_lost = 0;
  std::size_t jitter_transitions = 0;
  std::size_t detected_pairs = 0;
};

/// One entry per frame; nullopt where no pose was produced. Jitter is
/// counted over adjacent frames that both have a pose, when the relative
/// motion strictly exceeds either threshold.
JitterStats jitter_stats(std::span<const std::optional<RigidTransform>> track, const JitterThresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Frame-by-frame tracking loop

struct TrackingFrame {
  double timestamp = 0.0;
  std::vector<MarkerObservation> observations;
};

struct TrackingOutput {
  std::vector<std::optional<FusedPose>> raw;
  std::vector<std::optional<FusedPose>> filtered;
  std::vector<double> frame_seconds;  // processing time per frame
};

/// Groups a flat observation log into frames by timestamp. When
/// `frame_times` is non-empty it defines the frame clock (frames without
/// observations stay empty); otherwise the distinct log timestamps do.
std::vector<TrackingFrame> group_frames(std::span<const MarkerObservation> log, std::span<const double> frame_times = {});

/// Runs fusion and one-euro filtering over every frame. Frames without a
/// usable marker produce nullopt and do not advance the filter.
TrackingOutput track_markers(std::span<const TrackingFrame> frames, const MarkerRig& rig, const OneEuroParams& params);

}  // namespace mranchor
