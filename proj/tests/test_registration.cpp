#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "mranchor/error.hpp"
#include "mranchor/registration.hpp"
#include "mranchor/sim.hpp"
#include "oracles.hpp"

using namespace mranchor;

namespace {

template <typename F>
std::optional<ErrorCode> code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

const PointCloud& head_template() {
  static const PointCloud t = make_head_template();
  return t;
}

PointCloud with_noise(const PointCloud& c, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  PointCloud out = c;
  for (auto& p : out.points) p += Eigen::Vector3d(g(rng), g(rng), g(rng));
  return out;
}

PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

PointCloud fibonacci_sphere(std::size_t n) {
  PointCloud c;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - y * y);
    const double phi = golden * static_cast<double>(i);
    c.points.emplace_back(r * std::cos(phi), y, r * std::sin(phi));
  }
  return c;
}

bool within(const PoseError& e, double mm, double deg) {
  return e.translation_error < mm * 1e-3 && e.rotation_error < deg2rad(deg);
}

RigidTransform perturb(const RigidTransform& t, double mm, double deg, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Vector3d axis = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
  const Eigen::Vector3d shift = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized() * mm * 1e-3;
  return RigidTransform::from_axis_angle(axis, deg2rad(deg), shift) * t;
}

ScenarioConfig head_config(std::uint64_t trial) {
  ScenarioConfig c = scenario_preset("head-scene");
  c.seed = trial_seed(c.seed, trial);
  return c;
}

}  // namespace

// ---- crop --------------------------------------------------------------------

TEST(Crop, EverythingInsideIsKept) {
  std::mt19937_64 rng(41);
  const PointCloud c = random_cloud(rng, 500, 0.1);
  const PointCloud out = crop_roi(c, RegionOfInterest{});
  EXPECT_EQ(out.points, c.points);
}

TEST(Crop, AxisAlignedBox) {
  RegionOfInterest roi;
  roi.half_extents = {1, 1, 1};
  PointCloud c;
  c.points = {{0, 0, 0}, {2, 0, 0}};
  c.normals = {{0, 0, 1}, {1, 0, 0}};
  const PointCloud out = crop_roi(c, roi);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.points[0], Eigen::Vector3d(0, 0, 0));
  ASSERT_TRUE(out.has_normals());
  EXPECT_EQ(out.normals[0], Eigen::Vector3d(0, 0, 1));
}

TEST(Crop, RotatedBoxMatchesPerPointOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    RegionOfInterest roi;
    roi.center = oracle::random_transform(rng, 0.2);
    roi.half_extents = {0.05 + 0.01 * trial, 0.1, 0.07};
    const PointCloud c = random_cloud(rng, 2000, 0.4);
    const PointCloud out = crop_roi(c, roi);
    const oracle::Mat4 to_box = oracle::rigid_inverse(oracle::matrix_of(roi.center));
    std::vector<Eigen::Vector3d> expected;
    for (const auto& p : c.points) {
      const Eigen::Vector3d local = (to_box * p.homogeneous()).head<3>();
      if ((local.cwiseAbs() - roi.half_extents).maxCoeff() <= 0.0) expected.push_back(p);
    }
    EXPECT_EQ(out.points, expected);
  }
}

TEST(Crop, MayReturnEmpty) {
  PointCloud c;
  c.points = {{5, 5, 5}};
  EXPECT_TRUE(crop_roi(c, RegionOfInterest{}).empty());
}

// ---- voxel ---------------------------------------------------------------------

TEST(Voxel, SinglePoint) {
  PointCloud c;
  c.points = {{0.0123, -0.4, 1.7}};
  const PointCloud out = voxel_downsample(c, 0.01);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_LT((out.points[0] - c.points[0]).norm(), 1e-15);
}

TEST(Voxel, CentroidOfSharedVoxel) {
  PointCloud c;
  c.points = {{0.001, 0.001, 0.001}, {0.003, 0.005, 0.007}};
  const PointCloud out = voxel_downsample(c, 0.01);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_LT((out.points[0] - Eigen::Vector3d(0.002, 0.003, 0.004)).norm(), 1e-15);
}

TEST(Voxel, OutputNearInput) {
  std::mt19937_64 rng(43);
  const double voxel = 0.02;
  const PointCloud c = random_cloud(rng, 3000, 0.2);
  const PointCloud out = voxel_downsample(c, voxel);
  EXPECT_LE(out.size(), c.size());
  EXPECT_GT(out.size(), 0u);
  for (const auto& q : out.points) {
    double best = 1e9;
    for (const auto& p : c.points) best = std::min(best, (p - q).norm());
    EXPECT_LE(best, voxel * std::sqrt(3.0) / 2.0 + 1e-12);
  }
}

TEST(Voxel, AveragesNormals) {
  PointCloud c;
  c.points = {{0.001, 0, 0}, {0.002, 0, 0}};
  c.normals = {{1, 0, 0}, {0, 1, 0}};
  const PointCloud out = voxel_downsample(c, 0.01);
  ASSERT_TRUE(out.has_normals());
  EXPECT_NEAR(out.normals[0].norm(), 1.0, 1e-12);
  EXPECT_NEAR(out.normals[0].x(), std::sqrt(0.5), 1e-12);
}

// ---- normals -------------------------------------------------------------------

TEST(Normals, PlaneFacesViewpoint) {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  PointCloud c;
  for (int i = 0; i < 1000; ++i) c.points.emplace_back(u(rng), u(rng), 0.0);
  const PointCloud up = estimate_normals(c, 20, {0, 0, 2});
  for (const auto& n : up.normals) EXPECT_LT((n - Eigen::Vector3d::UnitZ()).norm(), 1e-3);
  const PointCloud down = estimate_normals(c, 20, {0, 0, -2});
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((down.normals[i] + up.normals[i]).norm(), 1e-12);
}

TEST(Normals, SphereIsRadial) {
  const PointCloud s = fibonacci_sphere(3000);
  const PointCloud inward = estimate_normals(s, 20, Eigen::Vector3d::Zero());
  std::size_t good = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double c = inward.normals[i].dot(-s.points[i].normalized());
    if (c > std::cos(deg2rad(5.0))) ++good;
  }
  EXPECT_GE(good, s.size() * 95 / 100);
  const PointCloud outward = estimate_normals_outward(s, 20);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_GT(outward.normals[i].dot(s.points[i]), 0.0);
}

TEST(Normals, TooSparse) {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  EXPECT_EQ(code_of([&] { estimate_normals(c, 20, {0, 0, 1}); }), ErrorCode::TooSparse);
}

// ---- coarse --------------------------------------------------------------------

TEST(Coarse, SelfAlignment) {
  const PointCloud src = estimate_normals_outward(voxel_downsample(head_template(), 0.005), 20);
  CoarseParams p;
  p.feature_radius = 0.04;
  p.reciprocal_k = 8;
  p.max_correspondence_distance = 0.015;
  const RegistrationResult r = coarse_register(src, src, p);
  EXPECT_TRUE(within(pose_error(r.transform, RigidTransform::identity()), 5, 5));
  EXPECT_GE(r.fitness, 0.0);
  EXPECT_LE(r.fitness, 1.0);
}

TEST(Coarse, RecoversKnownTransformFullOverlap) {
  const PointCloud src = estimate_normals_outward(voxel_downsample(head_template(), 0.005), 20);
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 3; ++trial) {
    const RigidTransform t = oracle::random_transform(rng, 0.1);
    PointCloud moved = with_noise(transform_cloud(head_template(), t), 0.001, 100 + trial);
    moved.normals.clear();
    const PointCloud dst = estimate_normals_outward(voxel_downsample(moved, 0.005), 20);
    CoarseParams p;
    p.feature_radius = 0.04;
    p.reciprocal_k = 8;
    p.max_correspondence_distance = 0.015;
    p.seed = trial;
    const RegistrationResult r = coarse_register(src, dst, p);
    const PoseError e = pose_error(r.transform, t);
    EXPECT_TRUE(within(e, 10, 10)) << e.translation_error << " " << rad2deg(e.rotation_error);
  }
}

TEST(Coarse, RecoversPartialView) {
  const PointCloud& tmpl = head_template();
  const PointCloud src = estimate_normals_outward(voxel_downsample(tmpl, 0.005), 20);
  int ok = 0;
  const int trials = 50;
  for (int i = 0; i < trials; ++i) {
    const ScenarioConfig c = head_config(i);
    const RigidTransform t = random_head_pose(c);
    std::vector<std::pair<double, std::size_t>> score;
    for (std::size_t k = 0; k < tmpl.size(); ++k) {
      const Eigen::Vector3d p = t.apply(tmpl.points[k]);
      score.emplace_back((t.rotation() * tmpl.normals[k]).dot(-p.normalized()), k);
    }
    std::sort(score.rbegin(), score.rend());
    PointCloud view;
    for (std::size_t k = 0; k < tmpl.size() * 6 / 10; ++k) view.points.push_back(t.apply(tmpl.points[score[k].second]));
    view = with_noise(view, 0.001, c.seed);
    const PointCloud dst = estimate_normals(voxel_downsample(view, 0.005), 20, Eigen::Vector3d::Zero());
    CoarseParams p;
    p.feature_radius = 0.045;
    p.reciprocal_k = 8;
    p.max_correspondence_distance = 0.015;
    p.seed = i;
    if (within(pose_error(coarse_register(src, dst, p).transform, t), 15, 15)) ++ok;
  }
  EXPECT_GE(ok, trials * 9 / 10);
}

TEST(Coarse, NoCorrespondences) {
  PointCloud empty;
  const PointCloud src = estimate_normals_outward(voxel_downsample(head_template(), 0.005), 20);
  EXPECT_EQ(code_of([&] { coarse_register(src, empty); }), ErrorCode::NoCorrespondences);
}

// ---- ICP -----------------------------------------------------------------------

class Icp : public ::testing::Test {
 protected:
  void SetUp() override {
    source = estimate_normals_outward(voxel_downsample(head_template(), 0.003), 20);
  }
  PointCloud source;
  IcpParams params{0.03, 50, 1e-6};
};

TEST_F(Icp, FixedPointOnIdenticalClouds) {
  std::mt19937_64 rng(46);
  const RigidTransform t = oracle::random_transform(rng, 0.2);
  const PointCloud target = transform_cloud(source, t);
  const RegistrationResult r = refine_icp(source, target, t, params);
  EXPECT_LT(r.inlier_rmse, 1e-9);
  EXPECT_TRUE(within(pose_error(r.transform, t), 1e-6, 1e-6));
  EXPECT_DOUBLE_EQ(r.fitness, 1.0);
}

TEST_F(Icp, ConvergesFromPerturbedStart) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const RigidTransform t = oracle::random_transform(rng, 0.2);
    PointCloud moved = with_noise(transform_cloud(source, t), 0.001, 200 + trial);
    moved.normals.clear();
    const PointCloud target = estimate_normals_outward(moved, 20);
    const RigidTransform init = perturb(t, 10, 10, rng);
    const RegistrationResult r = refine_icp(source, target, init, params);
    const PoseError e = pose_error(r.transform, t);
    EXPECT_TRUE(within(e, 2, 2)) << e.translation_error << " " << rad2deg(e.rotation_error);
  }
}

TEST_F(Icp, NeverWorsensAndObjectiveDescends) {
  std::mt19937_64 rng(48);
  for (int trial = 0; trial < 20; ++trial) {
    const RigidTransform t = oracle::random_transform(rng, 0.2);
    PointCloud moved = with_noise(transform_cloud(source, t), 0.002, 300 + trial);
    moved.normals.clear();
    const PointCloud target = estimate_normals_outward(moved, 20);
    const RigidTransform init = perturb(t, 5 + trial, 2 + trial, rng);
    IcpTrace trace;
    const RegistrationResult r = refine_icp(source, target, init, params, &trace);
    const RegistrationResult before = evaluate_registration(source, target, init, params.max_distance);
    const RegistrationResult after = evaluate_registration(source, target, r.transform, params.max_distance);
    EXPECT_LE(after.inlier_rmse, before.inlier_rmse + 1e-12);
    EXPECT_GE(after.fitness, before.fitness);
    ASSERT_FALSE(trace.objective.empty());
    for (std::size_t i = 1; i < trace.objective.size(); ++i) {
      EXPECT_LE(trace.objective[i], trace.objective[i - 1] + 1e-12);
    }
  }
}

TEST_F(Icp, Errors) {
  const PointCloud far = transform_cloud(source, RigidTransform::from_translation({1, 0, 0}));
  EXPECT_EQ(code_of([&] { refine_icp(source, far, RigidTransform::identity(), params); }),
            ErrorCode::NoCorrespondences);
  PointCloud bare = source;
  bare.normals.clear();
  EXPECT_EQ(code_of([&] { refine_icp(source, bare, RigidTransform::identity(), params); }),
            ErrorCode::InvalidArgument);
}

TEST(Evaluate, FitnessBounds) {
  const PointCloud src = voxel_downsample(head_template(), 0.005);
  const RegistrationResult same = evaluate_registration(src, src, RigidTransform::identity(), 0.001);
  EXPECT_DOUBLE_EQ(same.fitness, 1.0);
  EXPECT_EQ(same.inlier_rmse, 0.0);
  const RegistrationResult far =
      evaluate_registration(src, src, RigidTransform::from_translation({1, 0, 0}), 0.001);
  EXPECT_EQ(far.fitness, 0.0);
}

// ---- locate_head ---------------------------------------------------------------

TEST(LocateHead, KnownPoseWithoutClutter) {
  for (int trial = 0; trial < 3; ++trial) {
    ScenarioConfig c = head_config(trial);
    c.head.background = false;
    const HeadScene s = gen_head_scene(c, head_template(), random_head_pose(c));
    LocateParams p;
    p.seed = c.seed;
    const HeadLocalization h = locate_head(head_template(), s.scene, s.roi, p);
    const PoseError e = pose_error(h.refined.transform, s.t_true);
    EXPECT_TRUE(h.refined.converged);
    EXPECT_TRUE(within(e, 2, 2)) << e.translation_error << " " << rad2deg(e.rotation_error);
  }
}

TEST(LocateHead, BackgroundOutsideRoiIsIgnored) {
  for (int trial = 3; trial < 6; ++trial) {
    const ScenarioConfig c = head_config(trial);
    ASSERT_TRUE(c.head.background);
    const HeadScene s = gen_head_scene(c, head_template(), random_head_pose(c));
    LocateParams p;
    p.seed = c.seed;
    const HeadLocalization h = locate_head(head_template(), s.scene, s.roi, p);
    EXPECT_LT(h.roi_points, s.scene.size());
    EXPECT_TRUE(within(pose_error(h.refined.transform, s.t_true), 2, 2));
  }
}

TEST(LocateHead, NoiselessFullVisibility) {
  ScenarioConfig c = head_config(7);
  c.head.visibility = 1.0;
  c.noise.cloud_sigma = 0.0;
  const HeadScene s = gen_head_scene(c, head_template(), random_head_pose(c));
  const HeadLocalization h = locate_head(head_template(), s.scene, s.roi, {});
  EXPECT_LT(pose_error(h.refined.transform, s.t_true).translation_error, 0.0005);
}

TEST(LocateHead, EmptyRoi) {
  const ScenarioConfig c = head_config(0);
  const HeadScene s = gen_head_scene(c, head_template(), random_head_pose(c));
  RegionOfInterest away = s.roi;
  away.center = RigidTransform::from_translation({5, 5, 5});
  EXPECT_EQ(code_of([&] { locate_head(head_template(), s.scene, away, {}); }), ErrorCode::EmptyROI);
}

TEST(LocateHead, ClutterOnlyDoesNotConverge) {
  ScenarioConfig c = head_config(8);
  c.head.clutter_points = 4000;
  const HeadScene s = gen_head_scene(c, PointCloud{}, RigidTransform::identity());
  const HeadLocalization h = locate_head(head_template(), s.scene, s.roi, {});
  EXPECT_FALSE(h.refined.converged);
}

TEST(LocateHead, EquivariantUnderSceneMotion) {
  const ScenarioConfig c = head_config(9);
  const HeadScene s = gen_head_scene(c, head_template(), random_head_pose(c));
  const HeadLocalization base = locate_head(head_template(), s.scene, s.roi, {});
  std::mt19937_64 rng(49);
  const RigidTransform y = oracle::random_transform(rng, 0.5);
  RegionOfInterest roi = s.roi;
  roi.center = y * s.roi.center;
  LocateParams p;
  p.viewpoint = y.translation();
  const HeadLocalization moved = locate_head(head_template(), transform_cloud(s.scene, y), roi, p);
  EXPECT_TRUE(within(pose_error(moved.refined.transform, y * base.refined.transform), 2, 2));
}

TEST(LocateHead, Deterministic) {
  const ScenarioConfig c = head_config(10);
  const HeadScene s = gen_head_scene(c, head_template(), random_head_pose(c));
  LocateParams p;
  p.seed = 77;
  const HeadLocalization a = locate_head(head_template(), s.scene, s.roi, p);
  const HeadLocalization b = locate_head(head_template(), s.scene, s.roi, p);
  EXPECT_EQ(a.refined.transform.rotation().coeffs(), b.refined.transform.rotation().coeffs());
  EXPECT_EQ(a.refined.transform.translation(), b.refined.transform.translation());
  EXPECT_EQ(a.refined.fitness, b.refined.fitness);
  EXPECT_EQ(a.refined.inlier_rmse, b.refined.inlier_rmse);
  EXPECT_EQ(a.coarse.transform.translation(), b.coarse.transform.translation());
}
