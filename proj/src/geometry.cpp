#include "mranchor/geometry.hpp"

#include <cmath>

#include "mranchor/error.hpp"

namespace mranchor {

Eigen::Quaterniond canonical_quaternion(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond out = q.normalized();
  const Eigen::Vector4d c = out.coeffs();  // x, y, z, w
  double lead = c[3];
  if (lead == 0.0) {
    for (int i = 0; i < 3 && lead == 0.0; ++i) lead = c[i];
  }
  if (lead < 0.0) out.coeffs() = -out.coeffs();
  return out;
}

Eigen::Quaterniond align_hemisphere(const Eigen::Quaterniond& q, const Eigen::Quaterniond& reference) {
  if (q.coeffs().dot(reference.coeffs()) < 0.0) {
    Eigen::Quaterniond flipped = q;
    flipped.coeffs() = -q.coeffs();
    return flipped;
  }
  return q;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond exp_rotation(const Eigen::Vector3d& rotation_vector) {
  const double angle = rotation_vector.norm();
  if (angle < 1e-12) {
    // second-order accurate near zero
    Eigen::Quaterniond q(1.0, 0.5 * rotation_vector.x(), 0.5 * rotation_vector.y(), 0.5 * rotation_vector.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, rotation_vector / angle));
}

Eigen::Vector3d log_rotation(const Eigen::Quaterniond& q) {
  const Eigen::Quaterniond c = canonical_quaternion(q);
  const double vnorm = c.vec().norm();
  if (vnorm < 1e-15) return 2.0 * c.vec();
  const double angle = 2.0 * std::atan2(vnorm, c.w());
  return c.vec() * (angle / vnorm);
}

RigidTransform::RigidTransform(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation)
    : rotation_(canonical_quaternion(rotation)), translation_(translation) {}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : RigidTransform(Eigen::Quaterniond(rotation), translation) {}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  return {r, m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                               const Eigen::Vector3d& translation) {
  return {Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())), translation};
}

RigidTransform RigidTransform::from_translation(const Eigen::Vector3d& translation) {
  return {Eigen::Quaterniond::Identity(), translation};
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double RigidTransform::rotation_angle() const {
  return 2.0 * std::atan2(rotation_.vec().norm(), std::abs(rotation_.w()));
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Quaterniond qi = rotation_.conjugate();
  return {qi, -(qi * translation_)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
}

bool RigidTransform::is_finite() const {
  return rotation_.coeffs().allFinite() && translation_.allFinite();
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }

RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }

RigidTransform relative_motion(const TimedPose& earlier, const TimedPose& later) {
  if (!(later.timestamp > earlier.timestamp)) {
    throw Error(ErrorCode::NonMonotonicTimestamps, "relative_motion: later sample is not after earlier sample");
  }
  return later.pose * earlier.pose.inverse();
}

double rotation_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Eigen::Quaterniond rel = a * b.conjugate();
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

PoseError pose_error(const RigidTransform& estimate, const RigidTransform& truth) {
  return {(estimate.translation() - truth.translation()).norm(),
          rotation_distance(estimate.rotation(), truth.rotation())};
}

}  // namespace mranchor
