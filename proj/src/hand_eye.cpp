#include "mranchor/hand_eye.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "mranchor/error.hpp"
#include "stream_sync.hpp"

namespace mranchor {
namespace {

constexpr double kMaxConditionNumber = 1e8;
constexpr double kParallelAxisTolerance = deg2rad(1.0);

// Linear least squares; normal equations unless they are ill-conditioned,
// in which case SVD on the full system.
Eigen::Vector3d solve_least_squares(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs) {
  const Eigen::Matrix3d normal = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(normal);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (lo > 0.0 && hi / lo <= kMaxConditionNumber) {
    return normal.ldlt().solve(m.transpose() * rhs);
  }
  return m.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
}

bool has_independent_axes(std::span<const MotionPair> pairs) {
  std::vector<Eigen::Vector3d> axes;
  for (const auto& p : pairs) {
    const Eigen::Vector3d v = p.a.rotation().vec();
    if (v.norm() > 1e-12) axes.push_back(v.normalized());
  }
  for (std::size_t i = 0; i < axes.size(); ++i) {
    for (std::size_t j = i + 1; j < axes.size(); ++j) {
      // parallel and anti-parallel axes are equally uninformative
      const double s = axes[i].cross(axes[j]).norm();
      if (std::asin(std::min(1.0, s)) > kParallelAxisTolerance) return true;
    }
  }
  return false;
}

MotionPair make_pair(const TimedPose& h0, const TimedPose& h1, const TimedPose& m0, const TimedPose& m1) {
  MotionPair p;
  p.a = relative_motion(h0, h1);
  p.b = relative_motion(m0, m1);
  p.rotation_angle = p.a.rotation_angle();
  return p;
}

}  // namespace

std::vector<MotionPair> build_motion_pairs(std::span<const TimedPose> headset_stream,
                                           std::span<const TimedPose> marker_stream,
                                           const PairingOptions& options) {
  if (options.min_rotation < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "build_motion_pairs: min_rotation must be non-negative");
  }
  const auto matched = detail::match_streams(headset_stream, marker_stream, options.sync_tolerance);

  std::vector<MotionPair> pairs;
  auto consider = [&](std::size_t i, std::size_t j) {
    MotionPair p = make_pair(headset_stream[i], headset_stream[j], marker_stream[matched[i]],
                             marker_stream[matched[j]]);
    if (p.rotation_angle < options.min_rotation) return;
    if (std::abs(p.rotation_angle - p.b.rotation_angle()) > options.angle_consistency) return;
    pairs.push_back(p);
  };

  const std::size_t n = headset_stream.size();
  if (options.policy == PairingPolicy::Consecutive) {
    for (std::size_t i = 0; i + 1 < n; ++i) consider(i, i + 1);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) consider(i, j);
  }

  if (pairs.size() < 2) {
    throw Error(ErrorCode::InsufficientMotion,
                "build_motion_pairs: " + std::to_string(pairs.size()) + " pair(s) survive the rotation filter, need 2");
  }
  return pairs;
}

CalibrationResult solve_hand_eye(std::span<const MotionPair> pairs) {
  if (pairs.size() < 2) {
    throw Error(ErrorCode::InsufficientPairs, "solve_hand_eye: need at least 2 motion pairs");
  }
  if (!has_independent_axes(pairs)) {
    throw Error(ErrorCode::DegenerateMotion, "solve_hand_eye: all rotation axes are parallel within 1 degree");
  }

  const auto n = static_cast<Eigen::Index>(pairs.size());

  // Rotation: skew(Pa + Pb) * P' = Pb - Pa with the modified Rodrigues
  // vectors P = 2 sin(theta/2) * axis.
  Eigen::MatrixXd m(3 * n, 3);
  Eigen::VectorXd rhs(3 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Vector3d pa = 2.0 * pairs[k].a.rotation().vec();
    const Eigen::Vector3d pb = 2.0 * pairs[k].b.rotation().vec();
    m.block<3, 3>(3 * k, 0) = skew(pa + pb);
    rhs.segment<3>(3 * k) = pb - pa;
  }
  const Eigen::Vector3d p_prime = solve_least_squares(m, rhs);
  const Eigen::Vector3d p = 2.0 * p_prime / std::sqrt(1.0 + p_prime.squaredNorm());
  const double p2 = p.squaredNorm();
  const Eigen::Matrix3d rx = (1.0 - 0.5 * p2) * Eigen::Matrix3d::Identity() +
                             0.5 * (p * p.transpose() + std::sqrt(std::max(0.0, 4.0 - p2)) * skew(p));

  // Translation: (Ra - I) t = Rx tb - ta.
  for (Eigen::Index k = 0; k < n; ++k) {
    m.block<3, 3>(3 * k, 0) = pairs[k].a.rotation_matrix() - Eigen::Matrix3d::Identity();
    rhs.segment<3>(3 * k) = rx * pairs[k].b.translation() - pairs[k].a.translation();
  }
  const Eigen::Vector3d tx = solve_least_squares(m, rhs);

  CalibrationResult result;
  // Project onto SO(3); the closed form is orthonormal only up to rounding.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(rx, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  result.x = RigidTransform(r, tx);
  const PoseError residual = calibration_residual(result.x, pairs);
  result.rotation_residual = residual.rotation_error;
  result.translation_residual = residual.translation_error;
  result.pairs_used = pairs.size();
  return result;
}

PoseError calibration_residual(const RigidTransform& x, std::span<const MotionPair> pairs) {
  if (pairs.empty()) return {};
  double sum_t = 0.0;
  double sum_r = 0.0;
  for (const auto& p : pairs) {
    const PoseError e = pose_error(p.a * x, x * p.b);
    sum_t += e.translation_error * e.translation_error;
    sum_r += e.rotation_error * e.rotation_error;
  }
  const auto n = static_cast<double>(pairs.size());
  return {std::sqrt(sum_t / n), std::sqrt(sum_r / n)};
}

double corrected_trajectory_rmse(const RigidTransform& x, std::span<const TimedPose> camera_track,
                                 std::span<const TimedPose> headset_track, double sync_tolerance) {
  const auto matched = detail::match_streams(camera_track, headset_track, sync_tolerance);
  double sum = 0.0;
  for (std::size_t i = 0; i < camera_track.size(); ++i) {
    const Eigen::Vector3d corrected = x.apply(camera_track[i].pose.translation());
    sum += (corrected - headset_track[matched[i]].pose.translation()).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(camera_track.size()));
}

}  // namespace mranchor
