#pragma once

// SE(3) algebra shared by every pipeline stage. Units are meters, seconds and
// radians throughout; conversion to mm/degrees happens only when reporting.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <numbers>

namespace mranchor {

constexpr double deg2rad(double deg) noexcept { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) noexcept { return rad * 180.0 / std::numbers::pi; }

/// Rigid-body transform stored as a unit quaternion plus translation.
///
/// The quaternion is normalized and canonicalized to the w >= 0 hemisphere
/// on construction, so q and -q always produce the same stored value.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation);
  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);
  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                        const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());
  static RigidTransform from_translation(const Eigen::Vector3d& translation);

  const Eigen::Quaterniond& rotation() const noexcept { return rotation_; }
  const Eigen::Vector3d& translation() const noexcept { return translation_; }

  Eigen::Matrix3d rotation_matrix() const { return rotation_.toRotationMatrix(); }
  Eigen::Matrix4d matrix() const;

  Eigen::Vector3d apply(const Eigen::Vector3d& point) const { return rotation_ * point + translation_; }

  /// Rotation angle in [0, pi].
  double rotation_angle() const;

  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;

  bool is_finite() const;

 private:
  Eigen::Quaterniond rotation_{Eigen::Quaterniond::Identity()};
  Eigen::Vector3d translation_{Eigen::Vector3d::Zero()};
};

struct TimedPose {
  double timestamp = 0.0;
  RigidTransform pose;
};

struct PoseError {
  double translation_error = 0.0;  // meters
  double rotation_error = 0.0;     // radians, in [0, pi]
};

/// Homogeneous product a * b (apply b first, then a).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& t);

/// later * inverse(earlier). Throws NonMonotonicTimestamps unless later is
/// strictly after earlier.
RigidTransform relative_motion(const TimedPose& earlier, const TimedPose& later);

PoseError pose_error(const RigidTransform& estimate, const RigidTransform& truth);

/// Geodesic angle between two rotations, in [0, pi].
double rotation_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Normalizes and flips q into the w >= 0 hemisphere (first nonzero
/// component positive when w == 0).
Eigen::Quaterniond canonical_quaternion(const Eigen::Quaterniond& q);

/// Returns q or -q, whichever lies in the same hemisphere as reference.
Eigen::Quaterniond align_hemisphere(const Eigen::Quaterniond& q, const Eigen::Quaterniond& reference);

/// Rotation vector (axis * angle) to quaternion and back.
Eigen::Quaterniond exp_rotation(const Eigen::Vector3d& rotation_vector);
Eigen::Vector3d log_rotation(const Eigen::Quaterniond& q);

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

}  // namespace mranchor
