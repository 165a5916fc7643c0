#pragma once

// Neonatal-head localization: ROI crop, voxel downsampling, normal
// estimation, FPFH features, fast global registration (coarse) and
// point-to-plane ICP (refine).

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "mranchor/geometry.hpp"

namespace mranchor {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;  // empty or one unit vector per point

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_normals() const noexcept { return !normals.empty() && normals.size() == points.size(); }

  void validate() const;
};

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t);

struct RegionOfInterest {
  RigidTransform center;
  Eigen::Vector3d half_extents{0.15, 0.15, 0.15};

  void validate() const;
  bool contains(const Eigen::Vector3d& point) const;
};

struct RegistrationResult {
  RigidTransform transform;  // source -> target
  double fitness = 0.0;      // fraction of source points with an inlier correspondence
  double inlier_rmse = 0.0;  // meters
  int iterations = 0;
  bool converged = false;
};

PointCloud crop_roi(const PointCloud& cloud, const RegionOfInterest& roi);

/// One centroid per occupied voxel. Normals, when present, are averaged and
/// renormalized. Output order follows the first point that hit each voxel.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

/// Smallest-eigenvector normals of the k-nearest-neighbor covariance,
/// oriented toward the viewpoint.
PointCloud estimate_normals(const PointCloud& cloud, int neighbors, const Eigen::Vector3d& viewpoint);

/// Same as estimate_normals but oriented away from the cloud centroid, for
/// closed templates.
PointCloud estimate_normals_outward(const PointCloud& cloud, int neighbors);

constexpr int kFpfhDims = 33;
using FpfhFeatures = std::vector<Eigen::Matrix<float, kFpfhDims, 1>>;

/// Fast point feature histograms (3 x 11 bins). Requires normals.
FpfhFeatures compute_fpfh(const PointCloud& cloud, double radius);
/// One feature set per radius, sharing a single neighbourhood search.
std::vector<FpfhFeatures> compute_fpfh_multiscale(const PointCloud& cloud, std::span<const double> radii);

struct CoarseParams {
  double feature_radius = 0.015;
  int reciprocal_k = 1;  // match kept when each side is among the other's k nearest features
  double tuple_scale = 0.9;
  int tuple_max_count = 1000;
  double max_correspondence_distance = 0.009;
  int iterations = 64;
  double division_factor = 1.4;
  std::uint64_t seed = 0;
};

/// Correspondence-based global alignment; consumes no initial guess.
RegistrationResult coarse_register(const PointCloud& source, const PointCloud& target, const CoarseParams& params = {});

/// Variant taking precomputed features.
RegistrationResult coarse_register(const PointCloud& source, const FpfhFeatures& source_features,
                                   const PointCloud& target, const FpfhFeatures& target_features,
                                   const CoarseParams& params = {});

struct IcpParams {
  double max_distance = 0.006;
  int max_iterations = 50;
  double relative_tolerance = 1e-6;
};

struct IcpTrace {
  std::vector<double> objective;  // truncated point-to-plane objective per accepted iterate
};

/// Point-to-plane ICP. Target needs normals. Steps never raise the truncated
/// objective; the returned transform is the last iterate whose fitness and
/// inlier rmse are no worse than those of `init` (`init` itself otherwise).
RegistrationResult refine_icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                              const IcpParams& params = {}, IcpTrace* trace = nullptr);

/// Fitness and inlier rmse of `source` mapped by `t` against `target`.
RegistrationResult evaluate_registration(const PointCloud& source, const PointCloud& target, const RigidTransform& t,
                                         double max_distance);

struct LocateParams {
  double voxel = 0.005;         // features and coarse stage
  double refine_voxel = 0.002;  // ICP stage
  int normal_neighbors = 20;
  std::vector<double> feature_radius_factors{6.0, 7.0, 8.0, 9.0, 10.0};  // one coarse hypothesis per radius, in voxels
  int reciprocal_k = 8;
  double tuple_scale = 0.9;
  double coarse_distance_factor = 3.0;
  double icp_distance_factor = 2.0;
  int icp_max_iterations = 50;
  double score_distance_factor = 1.5;  // hypothesis ranking radius, in refine voxels
  double fitness_floor = 0.3;
  bool flip_hypotheses = true;  // also consider half-turn flips of each coarse pose
  int refine_candidates = 2;    // hypotheses carried to the fine ICP stage
  Eigen::Vector3d viewpoint = Eigen::Vector3d::Zero();  // sensor origin in the scene frame
  std::uint64_t seed = 0;
};

/// Both results map template -> scene. Their fitness is the fraction of
/// ROI scene points with a template correspondence at the ICP radius.
struct HeadLocalization {
  RegistrationResult coarse;
  RegistrationResult refined;  // T_b
  std::size_t roi_points = 0;
};

/// crop -> downsample -> normals -> coarse -> refine. `refined.converged`
/// is false when the final fitness is below the floor or no stage found
/// correspondences.
HeadLocalization locate_head(const PointCloud& head_template, const PointCloud& scene, const RegionOfInterest& roi,
                             const LocateParams& params = {});

}  // namespace mranchor
