#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>

#include "kdtree.hpp"
#include "mranchor/error.hpp"
#include "mranchor/registration.hpp"

namespace mranchor {

void PointCloud::validate() const {
  if (!normals.empty() && normals.size() != points.size()) {
    throw Error(ErrorCode::InvalidArgument, "point cloud: normals must align one-per-point");
  }
  for (const auto& n : normals) {
    if (std::abs(n.norm() - 1.0) > 1e-6) throw Error(ErrorCode::InvalidArgument, "point cloud: normal not unit length");
  }
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
  out.normals.reserve(cloud.normals.size());
  for (const auto& n : cloud.normals) out.normals.push_back(t.rotation() * n);
  return out;
}

void RegionOfInterest::validate() const {
  if (!(half_extents.array() > 0.0).all()) {
    throw Error(ErrorCode::InvalidArgument, "roi: half extents must be strictly positive");
  }
}

bool RegionOfInterest::contains(const Eigen::Vector3d& point) const {
  const Eigen::Vector3d local = center.rotation().conjugate() * (point - center.translation());
  return (local.cwiseAbs().array() <= half_extents.array()).all();
}

PointCloud crop_roi(const PointCloud& cloud, const RegionOfInterest& roi) {
  roi.validate();
  PointCloud out;
  const bool normals = cloud.has_normals();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!roi.contains(cloud.points[i])) continue;
    out.points.push_back(cloud.points[i]);
    if (normals) out.normals.push_back(cloud.normals[i]);
  }
  return out;
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) throw Error(ErrorCode::InvalidArgument, "voxel_downsample: voxel size must be positive");
  const bool normals = cloud.has_normals();
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slots;
  std::vector<Eigen::Vector3d> sum_p;
  std::vector<Eigen::Vector3d> sum_n;
  std::vector<int> count;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    const VoxelKey key{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                       static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                       static_cast<std::int64_t>(std::floor(p.z() / voxel))};
    auto [it, inserted] = slots.try_emplace(key, sum_p.size());
    if (inserted) {
      sum_p.push_back(Eigen::Vector3d::Zero());
      sum_n.push_back(Eigen::Vector3d::Zero());
      count.push_back(0);
    }
    sum_p[it->second] += p;
    if (normals) sum_n[it->second] += cloud.normals[i];
    ++count[it->second];
  }
  PointCloud out;
  out.points.reserve(sum_p.size());
  for (std::size_t i = 0; i < sum_p.size(); ++i) {
    out.points.push_back(sum_p[i] / count[i]);
    if (normals) {
      const double len = sum_n[i].norm();
      out.normals.push_back(len > 0.0 ? Eigen::Vector3d(sum_n[i] / len) : Eigen::Vector3d::UnitZ());
    }
  }
  return out;
}

PointCloud estimate_normals(const PointCloud& cloud, int neighbors, const Eigen::Vector3d& viewpoint) {
  if (neighbors < 3) throw Error(ErrorCode::InvalidArgument, "estimate_normals: need at least 3 neighbors");
  if (cloud.size() < static_cast<std::size_t>(neighbors)) {
    throw Error(ErrorCode::TooSparse, "estimate_normals: cloud has " + std::to_string(cloud.size()) +
                                          " points, fewer than " + std::to_string(neighbors) + " neighbors");
  }
  detail::KdTree3 tree(cloud.points);
  PointCloud out;
  out.points = cloud.points;
  out.normals.resize(cloud.size());
  std::vector<int> idx;
  std::vector<double> d2;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    tree.knn(cloud.points[i], neighbors, idx, d2);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int j : idx) mean += cloud.points[j];
    mean /= static_cast<double>(idx.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : idx) {
      const Eigen::Vector3d d = cloud.points[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d n = eig.eigenvectors().col(0).normalized();
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    out.normals[i] = n;
  }
  return out;
}

PointCloud estimate_normals_outward(const PointCloud& cloud, int neighbors) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : cloud.points) centroid += p;
  if (!cloud.empty()) centroid /= static_cast<double>(cloud.size());
  PointCloud out = estimate_normals(cloud, neighbors, centroid);
  for (auto& n : out.normals) n = -n;
  return out;
}

// ---------------------------------------------------------------------------
// FPFH

namespace {

constexpr int kBins = 11;

// Darboux-frame pair features (angle f1, f2, f3 as in the PFH literature).
Eigen::Vector3d pair_features(const Eigen::Vector3d& p1, const Eigen::Vector3d& n1, const Eigen::Vector3d& p2,
                              const Eigen::Vector3d& n2) {
  Eigen::Vector3d dp = p2 - p1;
  const double len = dp.norm();
  if (len == 0.0) return Eigen::Vector3d::Zero();
  Eigen::Vector3d na = n1;
  Eigen::Vector3d nb = n2;
  const double angle1 = na.dot(dp) / len;
  const double angle2 = nb.dot(dp) / len;
  double f3 = angle1;
  if (std::abs(angle1) < std::abs(angle2)) {
    na = n2;
    nb = n1;
    dp = -dp;
    f3 = -angle2;
  }
  Eigen::Vector3d v = dp.cross(na);
  const double vlen = v.norm();
  if (vlen == 0.0) return {0.0, 0.0, f3};
  v /= vlen;
  const Eigen::Vector3d w = na.cross(v);
  const double f2 = v.dot(nb);
  const double f1 = std::atan2(w.dot(nb), na.dot(nb));
  return {f1, f2, f3};
}

int bin_of(double value, double lo, double hi) {
  const int b = static_cast<int>(std::floor(kBins * (value - lo) / (hi - lo)));
  return std::clamp(b, 0, kBins - 1);
}

}  // namespace

std::vector<FpfhFeatures> compute_fpfh_multiscale(const PointCloud& cloud, std::span<const double> radii) {
  if (!cloud.has_normals()) throw Error(ErrorCode::InvalidArgument, "compute_fpfh: cloud has no normals");
  if (radii.empty()) throw Error(ErrorCode::InvalidArgument, "compute_fpfh: no radius given");
  for (double r : radii) {
    if (!(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "compute_fpfh: radius must be positive");
  }
  using Feature = Eigen::Matrix<float, kFpfhDims, 1>;
  using Histogram = Eigen::Matrix<double, kFpfhDims, 1>;
  const std::size_t n = cloud.size();
  const double max_radius = *std::max_element(radii.begin(), radii.end());
  detail::KdTree3 tree(cloud.points);

  // Neighbourhoods at the largest radius, nearest first, with each pair's
  // histogram bins; smaller radii use a prefix of the same lists.
  std::vector<std::vector<int>> neighborhoods(n);
  std::vector<std::vector<double>> distances(n);
  std::vector<std::vector<std::array<std::uint8_t, 3>>> bins(n);
  std::vector<int> idx;
  std::vector<double> d2;
  for (std::size_t i = 0; i < n; ++i) {
    tree.radius_search(cloud.points[i], max_radius, idx, d2);
    auto& nb = neighborhoods[i];
    auto& nd = distances[i];
    auto& nbins = bins[i];
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (static_cast<std::size_t>(idx[k]) == i) continue;
      const int j = idx[k];
      nb.push_back(j);
      nd.push_back(std::sqrt(d2[k]));
      const Eigen::Vector3d f = pair_features(cloud.points[i], cloud.normals[i], cloud.points[j], cloud.normals[j]);
      nbins.push_back({static_cast<std::uint8_t>(bin_of(f[0], -std::numbers::pi, std::numbers::pi)),
                       static_cast<std::uint8_t>(kBins + bin_of(f[1], -1.0, 1.0)),
                       static_cast<std::uint8_t>(2 * kBins + bin_of(f[2], -1.0, 1.0))});
    }
  }

  std::vector<FpfhFeatures> out;
  out.reserve(radii.size());
  std::vector<Histogram> spfh(n);
  std::vector<std::size_t> count(n);
  for (double radius : radii) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& nd = distances[i];
      count[i] = static_cast<std::size_t>(std::upper_bound(nd.begin(), nd.end(), radius) - nd.begin());
      spfh[i].setZero();
      if (count[i] == 0) continue;
      const double incr = 100.0 / static_cast<double>(count[i]);
      for (std::size_t k = 0; k < count[i]; ++k) {
        for (std::uint8_t b : bins[i][k]) spfh[i][b] += incr;
      }
    }
    FpfhFeatures features(n, Feature::Zero());
    for (std::size_t i = 0; i < n; ++i) {
      Histogram acc = Histogram::Zero();
      double block_sum[3] = {0.0, 0.0, 0.0};
      for (std::size_t k = 0; k < count[i]; ++k) {
        const double dist = distances[i][k];
        if (dist == 0.0) continue;
        const auto& s = spfh[neighborhoods[i][k]];
        for (int j = 0; j < kFpfhDims; ++j) {
          const double v = s[j] / dist;
          block_sum[j / kBins] += v;
          acc[j] += v;
        }
      }
      for (int j = 0; j < kFpfhDims; ++j) {
        const double scale = block_sum[j / kBins] != 0.0 ? 100.0 / block_sum[j / kBins] : 0.0;
        features[i][j] = static_cast<float>(acc[j] * scale + spfh[i][j]);
      }
    }
    out.push_back(std::move(features));
  }
  return out;
}

FpfhFeatures compute_fpfh(const PointCloud& cloud, double radius) {
  return std::move(compute_fpfh_multiscale(cloud, std::span<const double>(&radius, 1)).front());
}

}  // namespace mranchor
