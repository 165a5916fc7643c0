#pragma once

// Eye-to-hand calibration of the fixed headset-to-camera transform from
// paired relative motions, A_k X = X B_k, solved with the two-step Tsai-Lenz
// method (rotation from the modified-Rodrigues linear system, then
// translation by linear least squares).

#include <cstddef>
#include <span>
#include <vector>

#include "mranchor/geometry.hpp"

namespace mranchor {

struct MotionPair {
  RigidTransform a;  // headset-side relative motion
  RigidTransform b;  // camera-side relative motion
  double rotation_angle = 0.0;  // angle of a, radians
};

struct CalibrationResult {
  RigidTransform x;  // headset-from-camera
  double rotation_residual = 0.0;     // RMS over pairs, radians
  double translation_residual = 0.0;  // RMS over pairs, meters
  std::size_t pairs_used = 0;
};

enum class PairingPolicy {
  Consecutive,  // (i, i+1) only
  AllPairs,     // every i < j; for conditioning experiments
};

struct PairingOptions {
  double min_rotation = deg2rad(5.0);
  PairingPolicy policy = PairingPolicy::Consecutive;
  // Headset and marker samples are matched by nearest timestamp.
  double sync_tolerance = 0.005;
  // a and b of a valid pair are similar transforms and share a rotation angle.
  double angle_consistency = deg2rad(3.0);
};

std::vector<MotionPair> build_motion_pairs(std::span<const TimedPose> headset_stream,
                                           std::span<const TimedPose> marker_stream,
                                           const PairingOptions& options = {});

CalibrationResult solve_hand_eye(std::span<const MotionPair> pairs);

/// RMS of pose_error(a X, X b) over the pairs.
PoseError calibration_residual(const RigidTransform& x, std::span<const MotionPair> pairs);

/// Maps each camera-frame sample position through x and returns the RMS
/// distance to the time-matched headset-frame position.
double corrected_trajectory_rmse(const RigidTransform& x, std::span<const TimedPose> camera_track,
                                 std::span<const TimedPose> headset_track, double sync_tolerance = 0.005);

}  // namespace mranchor
