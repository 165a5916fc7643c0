#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "kdtree.hpp"
#include "mranchor/error.hpp"
#include "mranchor/registration.hpp"

namespace mranchor {
namespace {

using FeatureMatrix = Eigen::Matrix<float, kFpfhDims, Eigen::Dynamic>;

FeatureMatrix to_matrix(const FpfhFeatures& features) {
  FeatureMatrix m(kFpfhDims, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = features[i];
  return m;
}

// k nearest neighbors in feature space for both directions, by blocked
// brute force (squared distances via one GEMM per block). Lists are sorted
// by distance, ties broken by index.
void feature_knn(const FpfhFeatures& src, const FpfhFeatures& dst, int k, std::vector<std::vector<int>>& src_to_dst,
                 std::vector<std::vector<int>>& dst_to_src) {
  const FeatureMatrix a = to_matrix(src);
  const FeatureMatrix b = to_matrix(dst);
  const Eigen::VectorXf an = a.colwise().squaredNorm().transpose();
  const Eigen::RowVectorXf bn = b.colwise().squaredNorm();
  const Eigen::Index ns = a.cols();
  const Eigen::Index nd = b.cols();
  using Entry = std::pair<float, int>;
  const auto ks = static_cast<std::size_t>(std::min<Eigen::Index>(k, nd));
  const auto kd = static_cast<std::size_t>(std::min<Eigen::Index>(k, ns));
  std::vector<std::vector<Entry>> best_dst(static_cast<std::size_t>(nd));
  src_to_dst.assign(static_cast<std::size_t>(ns), {});

  // Keeps the kept-smallest `limit` entries in a max-heap.
  auto offer = [](std::vector<Entry>& heap, std::size_t limit, Entry e) {
    if (heap.size() < limit) {
      heap.push_back(e);
      std::push_heap(heap.begin(), heap.end());
    } else if (e < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = e;
      std::push_heap(heap.begin(), heap.end());
    }
  };

  constexpr Eigen::Index kBlock = 512;
  Eigen::MatrixXf d;
  std::vector<Entry> row;
  for (Eigen::Index start = 0; start < ns; start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, ns - start);
    d.noalias() = -2.0f * a.middleCols(start, rows).transpose() * b;
    d.colwise() += an.segment(start, rows);
    d.rowwise() += bn;
    for (Eigen::Index r = 0; r < rows; ++r) {
      row.clear();
      for (Eigen::Index c = 0; c < nd; ++c) offer(row, ks, {d(r, c), static_cast<int>(c)});
      std::sort_heap(row.begin(), row.end());
      auto& out = src_to_dst[static_cast<std::size_t>(start + r)];
      for (const auto& e : row) out.push_back(e.second);
    }
    for (Eigen::Index c = 0; c < nd; ++c) {
      auto& heap = best_dst[static_cast<std::size_t>(c)];
      for (Eigen::Index r = 0; r < rows; ++r) offer(heap, kd, {d(r, c), static_cast<int>(start + r)});
    }
  }
  dst_to_src.assign(static_cast<std::size_t>(nd), {});
  for (std::size_t c = 0; c < best_dst.size(); ++c) {
    std::sort_heap(best_dst[c].begin(), best_dst[c].end());
    for (const auto& e : best_dst[c]) dst_to_src[c].push_back(e.second);
  }
}

struct Normalization {
  Eigen::Vector3d mean;
  double scale;
};

Eigen::Vector3d centroid(const std::vector<Eigen::Vector3d>& pts) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  return pts.empty() ? c : Eigen::Vector3d(c / static_cast<double>(pts.size()));
}

// Applies a 6-vector increment (rotation vector, translation) on the left.
RigidTransform increment(const Eigen::Matrix<double, 6, 1>& xi) {
  return RigidTransform(exp_rotation(xi.head<3>()), xi.tail<3>());
}

struct Association {
  double objective = 0.0;  // truncated point-to-plane, mean over source
  double fitness = 0.0;
  double rmse = 0.0;
  std::vector<std::pair<int, int>> pairs;
};

Association associate(const PointCloud& source, const PointCloud& target, const detail::KdTree3& tree,
                      const RigidTransform& t, double max_distance, bool point_to_plane) {
  Association a;
  const double max_d2 = max_distance * max_distance;
  double sum_d2 = 0.0;
  double sum_obj = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Eigen::Vector3d p = t.apply(source.points[i]);
    double d2 = 0.0;
    const int j = tree.nearest(p, &d2);
    if (j < 0 || d2 > max_d2) {
      sum_obj += max_d2;
      continue;
    }
    a.pairs.emplace_back(static_cast<int>(i), j);
    sum_d2 += d2;
    if (point_to_plane) {
      const double r = target.normals[j].dot(p - target.points[j]);
      sum_obj += r * r;
    } else {
      sum_obj += d2;
    }
  }
  const auto n = static_cast<double>(source.size());
  a.fitness = source.empty() ? 0.0 : static_cast<double>(a.pairs.size()) / n;
  a.rmse = a.pairs.empty() ? 0.0 : std::sqrt(sum_d2 / static_cast<double>(a.pairs.size()));
  a.objective = source.empty() ? 0.0 : sum_obj / n;
  return a;
}

RegistrationResult evaluate_with(const PointCloud& source, const PointCloud& target, const detail::KdTree3& tree,
                                 const RigidTransform& t, double max_distance) {
  const Association a = associate(source, target, tree, t, max_distance, false);
  RegistrationResult r;
  r.transform = t;
  r.fitness = a.fitness;
  r.inlier_rmse = a.rmse;
  return r;
}

RegistrationResult icp_with(const PointCloud& source, const PointCloud& target, const detail::KdTree3& tree,
                            const RigidTransform& init, const IcpParams& params, IcpTrace* trace);

}  // namespace

RegistrationResult evaluate_registration(const PointCloud& source, const PointCloud& target, const RigidTransform& t,
                                         double max_distance) {
  const detail::KdTree3 tree(target.points);
  return evaluate_with(source, target, tree, t, max_distance);
}

RegistrationResult coarse_register(const PointCloud& source, const PointCloud& target, const CoarseParams& params) {
  if (source.empty() || target.empty()) {
    throw Error(ErrorCode::NoCorrespondences, "coarse_register: empty cloud");
  }
  return coarse_register(source, compute_fpfh(source, params.feature_radius), target,
                         compute_fpfh(target, params.feature_radius), params);
}

RegistrationResult coarse_register(const PointCloud& source, const FpfhFeatures& source_features,
                                   const PointCloud& target, const FpfhFeatures& target_features,
                                   const CoarseParams& params) {
  if (source.empty() || target.empty()) {
    throw Error(ErrorCode::NoCorrespondences, "coarse_register: empty cloud");
  }
  if (source_features.size() != source.size() || target_features.size() != target.size()) {
    throw Error(ErrorCode::InvalidArgument, "coarse_register: feature count does not match cloud size");
  }

  // Reciprocal feature matches: j among i's k nearest and i among j's.
  std::vector<std::vector<int>> s2t;
  std::vector<std::vector<int>> t2s;
  feature_knn(source_features, target_features, std::max(1, params.reciprocal_k), s2t, t2s);
  std::vector<std::pair<int, int>> mutual;
  for (std::size_t i = 0; i < s2t.size(); ++i) {
    for (int j : s2t[i]) {
      const auto& back = t2s[static_cast<std::size_t>(j)];
      if (std::find(back.begin(), back.end(), static_cast<int>(i)) != back.end()) {
        mutual.emplace_back(static_cast<int>(i), j);
      }
    }
  }
  if (mutual.size() < 3) {
    throw Error(ErrorCode::NoCorrespondences, "coarse_register: fewer than 3 reciprocal feature matches");
  }

  // Tuple test: three random matches must preserve pairwise lengths.
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, mutual.size() - 1);
  std::vector<std::pair<int, int>> corres;
  const std::size_t trials = mutual.size() * 100;
  int accepted = 0;
  const double s = params.tuple_scale;
  for (std::size_t trial = 0; trial < trials && accepted < params.tuple_max_count; ++trial) {
    const std::size_t r[3] = {pick(rng), pick(rng), pick(rng)};
    bool ok = true;
    for (int e = 0; e < 3 && ok; ++e) {
      const auto& m0 = mutual[r[e]];
      const auto& m1 = mutual[r[(e + 1) % 3]];
      const double ls = (source.points[m0.first] - source.points[m1.first]).norm();
      const double lt = (target.points[m0.second] - target.points[m1.second]).norm();
      ok = ls * s < lt && lt < ls / s;
    }
    if (!ok) continue;
    for (auto k : r) corres.push_back(mutual[k]);
    ++accepted;
  }
  if (corres.size() < 4) {
    throw Error(ErrorCode::NoCorrespondences, "coarse_register: fewer than 4 correspondences pass the tuple test");
  }

  // Normalize both clouds into a shared unit scale.
  const Eigen::Vector3d mean_s = centroid(source.points);
  const Eigen::Vector3d mean_t = centroid(target.points);
  double scale = 0.0;
  for (const auto& p : source.points) scale = std::max(scale, (p - mean_s).norm());
  for (const auto& p : target.points) scale = std::max(scale, (p - mean_t).norm());
  if (!(scale > 0.0)) scale = 1.0;

  std::vector<Eigen::Vector3d> ps(corres.size());
  std::vector<Eigen::Vector3d> pt(corres.size());
  for (std::size_t k = 0; k < corres.size(); ++k) {
    ps[k] = (source.points[corres[k].first] - mean_s) / scale;
    pt[k] = (target.points[corres[k].second] - mean_t) / scale;
  }

  // Graduated non-convexity over the scaled Geman-McClure penalty.
  const double floor_mu = std::pow(params.max_correspondence_distance / scale, 2);
  double mu = 1.0;
  RigidTransform current;
  int iterations = 0;
  for (int it = 0; it < params.iterations; ++it) {
    if (it % 4 == 0 && mu > floor_mu) mu = std::max(mu / params.division_factor, floor_mu);
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const Eigen::Vector3d p = current.apply(ps[k]);
      const Eigen::Vector3d r = p - pt[k];
      const double w0 = mu / (r.squaredNorm() + mu);
      const double w = w0 * w0;
      Eigen::Matrix<double, 3, 6> j;
      j.leftCols<3>() = -skew(p);
      j.rightCols<3>().setIdentity();
      jtj.noalias() += w * j.transpose() * j;
      jtr.noalias() += w * j.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> xi = jtj.ldlt().solve(-jtr);
    if (!xi.allFinite()) break;
    current = increment(xi) * current;
    ++iterations;
  }

  const Eigen::Matrix3d r = current.rotation_matrix();
  const Eigen::Vector3d t = mean_t - r * mean_s + scale * current.translation();
  RegistrationResult result =
      evaluate_registration(source, target, RigidTransform(current.rotation(), t), params.max_correspondence_distance);
  result.iterations = iterations;
  result.converged = true;
  return result;
}

RegistrationResult refine_icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                              const IcpParams& params, IcpTrace* trace) {
  const detail::KdTree3 tree(target.points);
  return icp_with(source, target, tree, init, params, trace);
}

namespace {

RegistrationResult icp_with(const PointCloud& source, const PointCloud& target, const detail::KdTree3& tree,
                            const RigidTransform& init, const IcpParams& params, IcpTrace* trace) {
  if (!target.has_normals()) throw Error(ErrorCode::InvalidArgument, "refine_icp: target has no normals");
  if (!init.is_finite()) throw Error(ErrorCode::InvalidArgument, "refine_icp: non-finite initial transform");

  RigidTransform current = init;
  Association assoc = associate(source, target, tree, current, params.max_distance, true);
  if (assoc.pairs.empty()) {
    throw Error(ErrorCode::NoCorrespondences, "refine_icp: no correspondences within max_distance at init");
  }
  if (trace) trace->objective = {assoc.objective};

  const double init_fitness = assoc.fitness;
  const double init_rmse = assoc.rmse;
  RegistrationResult best;
  best.transform = current;
  best.fitness = assoc.fitness;
  best.inlier_rmse = assoc.rmse;

  int iterations = 0;
  bool converged = false;
  for (int it = 0; it < params.max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& [i, j] : assoc.pairs) {
      const Eigen::Vector3d p = current.apply(source.points[static_cast<std::size_t>(i)]);
      const Eigen::Vector3d& n = target.normals[static_cast<std::size_t>(j)];
      const double r = n.dot(p - target.points[static_cast<std::size_t>(j)]);
      Eigen::Matrix<double, 6, 1> jac;
      jac.head<3>() = p.cross(n);
      jac.tail<3>() = n;
      jtj.noalias() += jac * jac.transpose();
      jtr.noalias() += jac * r;
    }
    Eigen::Matrix<double, 6, 1> xi = jtj.ldlt().solve(-jtr);
    if (!xi.allFinite()) break;

    // Accept only steps that do not raise the truncated objective; halve
    // the step a few times before giving up.
    bool accepted = false;
    Association next;
    RigidTransform candidate;
    for (int halving = 0; halving < 5; ++halving) {
      candidate = increment(xi) * current;
      next = associate(source, target, tree, candidate, params.max_distance, true);
      if (!next.pairs.empty() && next.objective <= assoc.objective) {
        accepted = true;
        break;
      }
      xi *= 0.5;
    }
    if (!accepted) {
      converged = true;
      break;
    }

    const double dfit = std::abs(next.fitness - assoc.fitness) / std::max(assoc.fitness, 1e-12);
    const double drmse = std::abs(next.rmse - assoc.rmse) / std::max(assoc.rmse, 1e-12);
    current = candidate;
    assoc = std::move(next);
    ++iterations;
    if (trace) trace->objective.push_back(assoc.objective);

    // Keep the lowest-objective iterate that loses neither inliers nor
    // residual against the starting pose.
    if (assoc.fitness >= init_fitness && assoc.rmse <= init_rmse) {
      best.transform = current;
      best.fitness = assoc.fitness;
      best.inlier_rmse = assoc.rmse;
    }
    if ((dfit < params.relative_tolerance && drmse < params.relative_tolerance) || assoc.rmse == 0.0) {
      converged = true;
      break;
    }
  }
  best.iterations = iterations;
  best.converged = converged;
  return best;
}

}  // namespace

HeadLocalization locate_head(const PointCloud& head_template, const PointCloud& scene, const RegionOfInterest& roi,
                             const LocateParams& params) {
  if (head_template.empty()) throw Error(ErrorCode::InvalidArgument, "locate_head: empty template");
  if (!(params.voxel > 0.0) || !(params.refine_voxel > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "locate_head: voxel sizes must be positive");
  }
  roi.validate();

  HeadLocalization out;
  const PointCloud cropped = crop_roi(scene, roi);
  out.roi_points = cropped.size();
  if (cropped.empty()) throw Error(ErrorCode::EmptyROI, "locate_head: no scene points inside the ROI");

  auto with_template_normals = [&](double voxel) {
    PointCloud ds = voxel_downsample(head_template, voxel);
    if (!ds.has_normals()) ds = estimate_normals_outward(ds, params.normal_neighbors);
    return ds;
  };
  auto failed = [&] {
    out.coarse = RegistrationResult{};
    out.refined = RegistrationResult{};
    return out;
  };

  // The scene is the source throughout so that fitness measures how much
  // of the ROI the head explains; results are inverted at the end.
  PointCloud scene_ds = voxel_downsample(cropped, params.voxel);
  if (scene_ds.size() < static_cast<std::size_t>(params.normal_neighbors)) return failed();
  scene_ds = estimate_normals(scene_ds, params.normal_neighbors, params.viewpoint);
  const PointCloud template_ds = with_template_normals(params.voxel);

  if (params.feature_radius_factors.empty() || params.refine_candidates < 1) {
    throw Error(ErrorCode::InvalidArgument, "locate_head: need a feature radius and a refine candidate");
  }

  // One coarse pose per feature radius. A partial view of a near-ellipsoidal
  // head is close to symmetric under half turns about the template's
  // principal axes, so those flips of each pose join the hypotheses.
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (const auto& p : template_ds.points) center += p;
  center /= static_cast<double>(template_ds.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : template_ds.points) cov += (p - center) * (p - center).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> axes(cov);
  std::vector<RigidTransform> flips{RigidTransform::identity()};
  if (params.flip_hypotheses) {
    for (int a = 0; a < 3; ++a) {
      flips.push_back(RigidTransform::from_translation(center) *
                      RigidTransform::from_axis_angle(axes.eigenvectors().col(a), std::numbers::pi) *
                      RigidTransform::from_translation(-center));
    }
  }

  struct Hypothesis {
    RegistrationResult coarse;
    RigidTransform start;
    double score = -1.0;
  };
  std::vector<double> radii;
  for (double factor : params.feature_radius_factors) radii.push_back(factor * params.voxel);
  const auto scene_features = compute_fpfh_multiscale(scene_ds, radii);
  const auto template_features = compute_fpfh_multiscale(template_ds, radii);
  std::vector<Hypothesis> hypotheses;
  for (std::size_t s = 0; s < radii.size(); ++s) {
    CoarseParams coarse;
    coarse.feature_radius = radii[s];
    coarse.tuple_scale = params.tuple_scale;
    coarse.reciprocal_k = params.reciprocal_k;
    coarse.max_correspondence_distance = params.coarse_distance_factor * params.voxel;
    coarse.seed = params.seed;
    RegistrationResult r;
    try {
      r = coarse_register(scene_ds, scene_features[s], template_ds, template_features[s], coarse);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoCorrespondences) throw;
      continue;
    }
    for (const auto& f : flips) {
      Hypothesis h;
      h.coarse = r;
      h.coarse.transform = f * r.transform;
      hypotheses.push_back(h);
    }
  }
  if (hypotheses.empty()) return failed();

  const PointCloud scene_fine = voxel_downsample(cropped, params.refine_voxel);
  const PointCloud template_fine = with_template_normals(params.refine_voxel);
  const detail::KdTree3 template_tree(template_ds.points);
  const detail::KdTree3 template_fine_tree(template_fine.points);

  // Hypotheses are ranked by support at a tight radius, where near-symmetric
  // wrong poses lose points that the ICP radius still accepts. A short ICP
  // on the coarse clouds settles each one first.
  const double score_distance = params.score_distance_factor * params.refine_voxel;
  IcpParams quick;
  quick.max_distance = params.icp_distance_factor * params.voxel;
  quick.max_iterations = std::max(1, params.icp_max_iterations / 2);
  for (auto& h : hypotheses) {
    h.start = h.coarse.transform;
    try {
      h.start = icp_with(scene_ds, template_ds, template_tree, h.coarse.transform, quick, nullptr).transform;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoCorrespondences) throw;
    }
    h.score = evaluate_with(scene_fine, template_fine, template_fine_tree, h.start, score_distance).fitness;
  }
  std::stable_sort(hypotheses.begin(), hypotheses.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });

  IcpParams icp;
  icp.max_distance = params.icp_distance_factor * params.voxel;
  icp.max_iterations = params.icp_max_iterations;
  const std::size_t candidates = std::min(hypotheses.size(), static_cast<std::size_t>(params.refine_candidates));
  const Hypothesis* winner = nullptr;
  RegistrationResult best;
  double best_score = -1.0;
  double best_rmse = 0.0;
  for (std::size_t i = 0; i < candidates; ++i) {
    RegistrationResult r;
    try {
      r = icp_with(scene_fine, template_fine, template_fine_tree, hypotheses[i].start, icp, nullptr);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoCorrespondences) throw;
      continue;
    }
    const RegistrationResult tight = evaluate_with(scene_fine, template_fine, template_fine_tree, r.transform, score_distance);
    if (tight.fitness > best_score || (tight.fitness == best_score && tight.inlier_rmse < best_rmse)) {
      best = r;
      best_score = tight.fitness;
      best_rmse = tight.inlier_rmse;
      winner = &hypotheses[i];
    }
  }
  if (!winner) winner = &hypotheses.front();

  // Report template -> scene, scored on the fine clouds at the ICP radius.
  out.coarse = evaluate_with(scene_fine, template_fine, template_fine_tree, winner->coarse.transform, icp.max_distance);
  out.coarse.transform = winner->coarse.transform.inverse();
  out.coarse.iterations = winner->coarse.iterations;
  out.coarse.converged = winner->coarse.converged;
  if (best_score < 0.0) {
    out.refined = out.coarse;
    out.refined.converged = false;
    return out;
  }
  out.refined = best;
  out.refined.transform = best.transform.inverse();
  out.refined.converged = best.fitness >= params.fitness_floor;
  return out;
}

}  // namespace mranchor
