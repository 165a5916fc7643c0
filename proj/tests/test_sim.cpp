#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "mranchor/error.hpp"
#include "mranchor/hand_eye.hpp"
#include "mranchor/harness.hpp"
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

bool same_stream(const std::vector<TimedPose>& a, const std::vector<TimedPose>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].timestamp != b[i].timestamp || a[i].pose.translation() != b[i].pose.translation() ||
        a[i].pose.rotation().coeffs() != b[i].pose.rotation().coeffs()) {
      return false;
    }
  }
  return true;
}

ScenarioConfig clean_tracking(const char* preset) {
  ScenarioConfig c = scenario_preset(preset);
  c.noise.corner_pixel_sigma = 0.0;
  c.noise.depth_sigma = 0.0;
  c.noise.rgb_depth_sigma = 0.0;
  c.occlusion.visibility = 1.0;
  c.frame_count = 300;
  return c;
}

std::vector<TimedPose> random_track(std::mt19937_64& rng, std::size_t n) {
  std::vector<TimedPose> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back({i / 30.0, oracle::random_transform(rng)});
  return t;
}

}  // namespace

// ---- presets -------------------------------------------------------------------

TEST(Presets, AllNamesResolve) {
  for (const auto& name : preset_names()) {
    const ScenarioConfig c = scenario_preset(name);
    EXPECT_EQ(c.name, name);
    EXPECT_NO_THROW(c.validate());
    EXPECT_NO_THROW(harness::scenario_kind(c));
  }
  EXPECT_EQ(code_of([] { scenario_preset("table2"); }), ErrorCode::InvalidArgument);
}

TEST(Presets, Validation) {
  ScenarioConfig c = scenario_preset("table1-2m-rgbd");
  c.frame_count = 1;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
  c = scenario_preset("table1-2m-rgbd");
  c.occlusion.visibility = 1.5;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
  c = scenario_preset("table1-2m-rgbd");
  c.noise.depth_sigma = -1.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
}

TEST(Presets, TrialSeedsDiffer) {
  EXPECT_NE(trial_seed(1, 0), trial_seed(1, 1));
  EXPECT_NE(trial_seed(1, 0), trial_seed(2, 0));
  EXPECT_EQ(trial_seed(5, 3), trial_seed(5, 3));
}

// ---- calibration scenarios ----------------------------------------------------

TEST(CalibrationScenario, ZeroNoiseRecoversMount) {
  const ScenarioConfig c = scenario_preset("calibration-clean");
  const RigidTransform x = harness::nominal_headset_from_camera();
  const CalibrationScenario s = gen_calibration_scenario(c, x);
  const auto pairs = build_motion_pairs(s.headset_stream, s.marker_stream);
  const CalibrationResult r = solve_hand_eye(pairs);
  const PoseError e = pose_error(r.x, x);
  EXPECT_LT(e.translation_error, 1e-6);
  EXPECT_LT(e.rotation_error, 1e-6);
}

TEST(CalibrationScenario, PureTranslationIsDegenerate) {
  ScenarioConfig c = scenario_preset("calibration-clean");
  c.trajectory.rotation_amplitude = 0.0;
  const CalibrationScenario s = gen_calibration_scenario(c, harness::nominal_headset_from_camera());
  EXPECT_EQ(code_of([&] { build_motion_pairs(s.headset_stream, s.marker_stream); }), ErrorCode::InsufficientMotion);
  PairingOptions loose;
  loose.min_rotation = 0.0;
  EXPECT_EQ(code_of([&] { solve_hand_eye(build_motion_pairs(s.headset_stream, s.marker_stream, loose)); }),
            ErrorCode::DegenerateMotion);
}

TEST(CalibrationScenario, Deterministic) {
  const ScenarioConfig c = scenario_preset("calibration");
  const RigidTransform x = harness::nominal_headset_from_camera();
  const CalibrationScenario a = gen_calibration_scenario(c, x);
  const CalibrationScenario b = gen_calibration_scenario(c, x);
  EXPECT_TRUE(same_stream(a.headset_stream, b.headset_stream));
  EXPECT_TRUE(same_stream(a.marker_stream, b.marker_stream));
  EXPECT_TRUE(same_stream(a.validation_camera, b.validation_camera));
  ScenarioConfig other = c;
  other.seed = c.seed + 1;
  EXPECT_FALSE(same_stream(a.marker_stream, gen_calibration_scenario(other, x).marker_stream));
}

TEST(CalibrationScenario, NoisyRecordingCorrectsTrajectory) {
  const ScenarioConfig base = scenario_preset("calibration");
  const RigidTransform x = harness::nominal_headset_from_camera();
  for (int trial = 0; trial < 10; ++trial) {
    ScenarioConfig c = base;
    c.seed = trial_seed(base.seed, trial);
    const CalibrationScenario s = gen_calibration_scenario(c, x);
    const CalibrationResult r = solve_hand_eye(build_motion_pairs(s.headset_stream, s.marker_stream));
    const double corrected = corrected_trajectory_rmse(r.x, s.validation_camera, s.validation_headset);
    const double uncorrected =
        corrected_trajectory_rmse(RigidTransform::identity(), s.validation_camera, s.validation_headset);
    EXPECT_LE(corrected, 0.005);
    EXPECT_LT(corrected, uncorrected);
  }
}

// ---- tracking scenarios --------------------------------------------------------

TEST(TrackingScenario, NoiselessFourMarkers) {
  const ScenarioConfig c = clean_tracking("table1-4m-rgbd");
  const MarkerRig rig = rig_from_config(c);
  const TrackingScenario s = gen_tracking_scenario(c, rig);
  const TrackingOutput out = track_markers(group_frames(s.log), rig, {});
  const oracle::Ape a = oracle::ape(to_pose_stream(out.raw), s.truth);
  EXPECT_GT(a.frames, c.frame_count * 9 / 10);
  EXPECT_LT(a.mean_mm, 0.1);
  EXPECT_LT(a.mean_deg, 0.01);
}

TEST(TrackingScenario, HalfVisibilityTwoMarkers) {
  ScenarioConfig c = scenario_preset("table1-2m-rgbd");
  c.occlusion.visibility = 0.5;
  c.occlusion.view_cone = deg2rad(89.0);
  c.frame_count = 1000;
  const MarkerRig rig = rig_from_config(c);
  const TrackingScenario s = gen_tracking_scenario(c, rig);
  std::vector<double> clock;
  for (const auto& t : s.truth) clock.push_back(t.timestamp);
  const TrackingOutput out = track_markers(group_frames(s.log, clock), rig, {});
  const JitterStats j = jitter_stats([&] {
    std::vector<std::optional<RigidTransform>> v;
    for (const auto& f : out.raw) v.push_back(f ? std::optional(f->pose) : std::nullopt);
    return v;
  }());
  EXPECT_NEAR(j.marker_loss_rate, 0.25, 0.05);
}

TEST(TrackingScenario, Deterministic) {
  ScenarioConfig c = scenario_preset("table1-2m-rgb");
  c.frame_count = 200;
  const MarkerRig rig = rig_from_config(c);
  const TrackingScenario a = gen_tracking_scenario(c, rig);
  const TrackingScenario b = gen_tracking_scenario(c, rig);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].marker_id, b.log[i].marker_id);
    EXPECT_EQ(a.log[i].timestamp, b.log[i].timestamp);
    EXPECT_EQ(a.log[i].corners_2d, b.log[i].corners_2d);
    EXPECT_EQ(a.log[i].corners_3d, b.log[i].corners_3d);
    EXPECT_EQ(a.log[i].valid_depth, b.log[i].valid_depth);
  }
  EXPECT_TRUE(same_stream(a.truth, b.truth));
}

TEST(TrackingScenario, FourMarkersLoseFewerFrames) {
  ScenarioConfig two = scenario_preset("table1-2m-rgbd");
  ScenarioConfig four = scenario_preset("table1-4m-rgbd");
  two.frame_count = four.frame_count = 300;
  const SetupSummary a = run_tracking_trials(two, 5);
  const SetupSummary b = run_tracking_trials(four, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_LT(b.filtered_trials[i].jfp.marker_loss_rate, 0.5 * a.filtered_trials[i].jfp.marker_loss_rate);
  }
}

TEST(TrackingScenario, TrendRatios) {
  std::vector<SetupSummary> s;
  for (const char* name : {"table1-2m-rgb", "table1-4m-rgb", "table1-2m-rgbd", "table1-4m-rgbd"}) {
    ScenarioConfig c = scenario_preset(name);
    c.frame_count = 300;
    s.push_back(run_tracking_trials(c, 5));
  }
  const harness::TrendRatios r = harness::trend_ratios(s[0], s[1], s[2], s[3]);
  EXPECT_LT(r.loss_4m_over_2m, 0.5);
  EXPECT_LT(r.ape_rgbd_over_rgb, 0.3);
  EXPECT_LT(r.jitter_filtered_over_raw, 0.5);
}

// ---- head scenes ---------------------------------------------------------------

TEST(HeadScene, VisibilityKeepsFrontalFraction) {
  ScenarioConfig c = scenario_preset("head-scene");
  c.head.background = false;
  c.head.sample_fraction = 1.0;
  c.noise.cloud_sigma = 0.0;
  const PointCloud tmpl = make_head_template();
  const RigidTransform pose = random_head_pose(c);
  c.head.visibility = 1.0;
  const std::size_t full = gen_head_scene(c, tmpl, pose).scene.size();
  c.head.visibility = 0.6;
  const std::size_t part = gen_head_scene(c, tmpl, pose).scene.size();
  EXPECT_NEAR(static_cast<double>(part) / static_cast<double>(full), 0.6, 0.01);
  EXPECT_LT(full, tmpl.size());
}

TEST(HeadScene, PoseInsideRoi) {
  const ScenarioConfig c = scenario_preset("head-scene");
  for (int i = 0; i < 50; ++i) {
    ScenarioConfig t = c;
    t.seed = trial_seed(c.seed, i);
    EXPECT_TRUE(c.head.roi.contains(random_head_pose(t).translation()));
  }
}

TEST(HeadScene, BackgroundLiesOutsideRoi) {
  ScenarioConfig c = scenario_preset("head-scene");
  const HeadScene s = gen_head_scene(c, PointCloud{}, RigidTransform::identity());
  ASSERT_FALSE(s.scene.empty());
  for (const auto& p : s.scene.points) EXPECT_FALSE(s.roi.contains(p));
}

// ---- metrics -------------------------------------------------------------------

TEST(GuidanceScenario, CheckpointsStrictlyIncrease) {
  ScenarioConfig c = scenario_preset("guidance");
  for (std::size_t n : {10u, 11u, 37u, 300u}) {
    c.frame_count = n;
    const GuidanceScenario s = gen_guidance_scenario(c);
    ASSERT_EQ(s.trajectory.samples.size(), n);
    ASSERT_EQ(s.trajectory.checkpoints.size(), 4u);
    for (std::size_t k = 1; k < 4; ++k) {
      EXPECT_LT(s.trajectory.checkpoints[k - 1].sample_index, s.trajectory.checkpoints[k].sample_index);
    }
  }
  c.frame_count = 9;
  EXPECT_EQ(code_of([&] { gen_guidance_scenario(c); }), ErrorCode::InvalidArgument);
}

TEST(Metrics, PerfectEstimate) {
  std::mt19937_64 rng(81);
  const auto truth = random_track(rng, 50);
  const MetricsReport m = compute_metrics(truth, truth, std::vector<double>(50, 0.001));
  EXPECT_EQ(m.ape_translation_mm.mean, 0.0);
  EXPECT_EQ(m.ape_translation_mm.std, 0.0);
  EXPECT_LT(m.ape_rotation_deg.mean, 1e-6);
  EXPECT_EQ(m.frames_evaluated, 50u);
  EXPECT_NEAR(m.throughput_fps, 1000.0, 1e-6);
}

TEST(Metrics, ConstantOffset) {
  std::mt19937_64 rng(82);
  const auto truth = random_track(rng, 40);
  std::vector<TimedPose> est = truth;
  for (auto& e : est) e.pose = RigidTransform::from_translation({0.0, 0.003, 0.0}) * e.pose;
  const MetricsReport m = compute_metrics(est, truth, {});
  EXPECT_NEAR(m.ape_translation_mm.mean, 3.0, 1e-9);
  EXPECT_NEAR(m.ape_translation_mm.std, 0.0, 1e-9);
  EXPECT_LT(m.ape_rotation_deg.mean, 1e-6);
}

TEST(Metrics, MatchesBruteForceOracle) {
  std::mt19937_64 rng(83);
  std::bernoulli_distribution lost(0.2);
  std::normal_distribution<double> noise(0.0, 0.004);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TimedPose> truth;
    RigidTransform pose = oracle::random_transform(rng);
    for (int i = 0; i < 120; ++i) {
      pose = RigidTransform::from_axis_angle(Eigen::Vector3d::UnitX(), 0.02, {0.002, 0, 0}) * pose;
      truth.push_back({i / 30.0, pose});
    }
    std::vector<TimedPose> est;
    std::vector<std::optional<oracle::Mat4>> plain;
    for (const auto& t : truth) {
      if (lost(rng)) {
        plain.emplace_back();
        continue;
      }
      const RigidTransform e =
          RigidTransform::from_axis_angle(Eigen::Vector3d::UnitZ(), noise(rng), {noise(rng), noise(rng), noise(rng)}) *
          t.pose;
      est.push_back({t.timestamp, e});
      plain.emplace_back(oracle::matrix_of(e));
    }
    const MetricsReport m = compute_metrics(est, truth, {});
    const oracle::Ape a = oracle::ape(est, truth);
    const oracle::Jitter j = oracle::jitter_scan(plain, 0.005, deg2rad(5.0));
    EXPECT_NEAR(m.ape_translation_mm.mean, a.mean_mm, 1e-9);
    EXPECT_NEAR(m.ape_translation_mm.std, a.std_mm, 1e-9);
    EXPECT_NEAR(m.ape_rotation_deg.mean, a.mean_deg, 1e-6);
    EXPECT_NEAR(m.ape_rotation_deg.std, a.std_deg, 1e-6);
    EXPECT_EQ(m.frames_evaluated, a.frames);
    EXPECT_EQ(m.jfp.frames_lost, j.lost);
    EXPECT_EQ(m.jfp.detected_pairs, j.pairs);
    EXPECT_EQ(m.jfp.jitter_transitions, j.transitions);
  }
}

TEST(Metrics, StreamMismatch) {
  std::mt19937_64 rng(84);
  const auto truth = random_track(rng, 10);
  std::vector<TimedPose> est{{0.5, RigidTransform::identity()}};
  EXPECT_EQ(code_of([&] { compute_metrics(est, truth, {}); }), ErrorCode::StreamMismatch);
  const std::vector<TimedPose> twice{truth[1], truth[1]};
  EXPECT_EQ(code_of([&] { compute_metrics(twice, truth, {}); }), ErrorCode::StreamMismatch);
  const std::vector<TimedPose> single{truth[0]};
  EXPECT_EQ(code_of([&] { compute_metrics(single, single, {}); }), ErrorCode::StreamMismatch);
}

TEST(Metrics, TruthAsEstimateIsClean) {
  for (const char* name : {"table1-2m-rgbd", "table1-4m-rgb"}) {
    const ScenarioConfig c = scenario_preset(name);
    const TrackingScenario s = gen_tracking_scenario(c, rig_from_config(c));
    const MetricsReport m = compute_metrics(s.truth, s.truth, {});
    EXPECT_EQ(m.ape_translation_mm.mean, 0.0);
    EXPECT_LT(m.ape_rotation_deg.mean, 1e-6);
    EXPECT_EQ(m.jfp.jitter_transitions, 0u);
    EXPECT_EQ(m.jfp.frames_lost, 0u);
  }
}

TEST(Metrics, MeanStdPopulation) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const MeanStd m = mean_std(v);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_DOUBLE_EQ(m.std, std::sqrt(1.25));
  EXPECT_EQ(mean_std(std::vector<double>{}).mean, 0.0);
}
