#pragma once

// Synthetic scenarios with ground truth, and the tracking metrics used to
// score them (APE, jitter-frame percentages, throughput).

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mranchor/geometry.hpp"
#include "mranchor/guidance.hpp"
#include "mranchor/marker_fusion.hpp"
#include "mranchor/registration.hpp"

namespace mranchor {

enum class DepthMode {
  RgbD,      // corner depth from the depth sensor
  RgbProxy,  // depth replaced by an inflated-noise estimate standing in for RGB-only pose recovery
};

struct NoiseModel {
  double corner_pixel_sigma = 0.3;  // pixels
  double depth_sigma = 0.001;       // meters
  double rgb_depth_sigma = 0.012;   // meters, RgbProxy mode
  double depth_dropout = 0.0;       // per-corner probability of missing depth
  double cloud_sigma = 0.001;       // meters
  double controller_translation_sigma = 0.0;  // meters
  double controller_rotation_sigma = 0.0;     // radians
  double marker_translation_sigma = 0.0;      // meters, calibration marker poses
  double marker_rotation_sigma = 0.0;         // radians
};

struct MarkerPlacement {
  int id = 0;
  RigidTransform pose_in_model;  // marker frame expressed in the model frame
};

struct OcclusionModel {
  double visibility = 1.0;           // per-marker, per-frame probability
  double view_cone = deg2rad(75.0);  // max angle between marker normal and the camera ray
};

/// Smooth random motion about a base pose: natural cubic splines through
/// seeded waypoints for translation offset and rotation vector.
struct TrajectorySpec {
  RigidTransform base;
  double translation_amplitude = 0.02;      // meters, per axis
  double rotation_amplitude = deg2rad(3.0); // radians, per rotation-vector axis
  double waypoint_interval = 2.0;           // seconds
};

struct HeadSceneSpec {
  double visibility = 0.6;       // fraction of the camera-facing template points kept, most frontal first
  double sample_fraction = 0.5;  // random subsampling of the dense template
  bool background = true;        // add a wall plane outside the ROI
  std::size_t clutter_points = 0; // points on a tilted patch inside the ROI
  RegionOfInterest roi;
  double placement_jitter = 0.04;  // meters; head center offset from the ROI center, per axis
};

struct ScenarioConfig {
  std::string name = "custom";
  std::uint64_t seed = 0;
  std::size_t frame_count = 1000;
  double frame_rate = 30.0;  // Hz
  NoiseModel noise;
  DepthMode depth_mode = DepthMode::RgbD;
  CameraIntrinsics intrinsics;
  double marker_size = 0.08;
  std::vector<MarkerPlacement> markers;
  OcclusionModel occlusion;
  TrajectorySpec trajectory;
  // calibration recordings
  RigidTransform marker_on_controller;
  // head scenes
  HeadSceneSpec head;

  void validate() const;
};

/// Names accepted by scenario_preset.
std::vector<std::string> preset_names();

/// table1-{2m,4m}-{rgb,rgbd}, calibration, calibration-clean, head-scene,
/// guidance. Throws InvalidArgument for an unknown name.
ScenarioConfig scenario_preset(std::string_view name);

/// The rig implied by a config's marker placements.
MarkerRig rig_from_config(const ScenarioConfig& config);

/// Deterministic per-trial seed derived from a base seed.
std::uint64_t trial_seed(std::uint64_t base, std::uint64_t trial);

// ---------------------------------------------------------------------------

struct CalibrationScenario {
  std::vector<TimedPose> headset_stream;  // controller pose in the headset frame
  std::vector<TimedPose> marker_stream;   // marker pose in the camera frame
  RigidTransform x_true;                  // headset-from-camera
  RigidTransform marker_offset;           // marker pose in the controller frame
  // Validation recording with the marker at the controller origin.
  std::vector<TimedPose> validation_headset;
  std::vector<TimedPose> validation_camera;
};

CalibrationScenario gen_calibration_scenario(const ScenarioConfig& config, const RigidTransform& x_true);

struct TrackingScenario {
  std::vector<MarkerObservation> log;
  std::vector<TimedPose> truth;  // model pose in the camera frame, every frame
};

TrackingScenario gen_tracking_scenario(const ScenarioConfig& config, const MarkerRig& rig);

/// Gaussian radial bump (negative height for a dent) centered on a
/// direction from the head center.
struct HeadFeature {
  Eigen::Vector3d direction;
  double height = 0.0;  // meters
  double width = 0.2;   // radians
};

struct HeadTemplateSpec {
  Eigen::Vector3d semi_axes{0.060, 0.050, 0.045};
  // nose, chin, ears, brow, eye sockets, occiput, parietal bosses, fontanelle
  std::vector<HeadFeature> features{
      {{1.0, 0.0, -0.35}, 0.014, 0.22},  {{0.55, 0.0, -0.85}, 0.008, 0.30}, {{0.0, 1.0, 0.1}, 0.007, 0.14},
      {{-0.05, -1.0, 0.1}, 0.007, 0.14}, {{0.8, 0.0, 0.6}, 0.005, 0.35},   {{0.85, 0.35, 0.1}, -0.004, 0.12},
      {{0.85, -0.35, 0.1}, -0.004, 0.12}, {{-1.0, 0.0, -0.2}, 0.006, 0.25}, {{-0.3, 0.7, 0.7}, 0.004, 0.30},
      {{-0.35, -0.65, 0.7}, 0.005, 0.25}, {{0.1, 0.0, 1.0}, -0.003, 0.25}};
  int samples = 20000;
};

/// Ellipsoid with facial and cranial bumps, sampled densely with outward
/// normals. The bumps break the ellipsoid's symmetries.
PointCloud make_head_template(const HeadTemplateSpec& spec = {});

struct HeadScene {
  PointCloud scene;  // camera frame
  RigidTransform t_true;
  RegionOfInterest roi;
};

/// Places the template at t_true, keeps the camera-facing fraction, subsamples,
/// adds noise and background. Passing an empty template yields a clutter-only scene.
HeadScene gen_head_scene(const ScenarioConfig& config, const PointCloud& head_template, const RigidTransform& t_true);

/// Random head pose inside the config's ROI (uniform orientation).
RigidTransform random_head_pose(const ScenarioConfig& config);

struct GuidanceScenario {
  ExpertTrajectory trajectory;
  RigidTransform anchor;  // anchor frame -> headset frame
  std::vector<TimedPose> wrist;  // headset frame
};

/// A trainee that approaches the expert hand, follows it, and strays at one
/// checkpoint before re-aligning.
GuidanceScenario gen_guidance_scenario(const ScenarioConfig& config);

// ---------------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_std(std::span<const double> values);

struct MetricsReport {
  MeanStd ape_translation_mm;
  MeanStd ape_rotation_deg;
  JitterStats jfp;
  double throughput_fps = 0.0;
  std::size_t frames_evaluated = 0;
};

/// `estimated` holds poses for the frames that produced one; every estimate
/// timestamp must match a truth timestamp. Frames without an estimate count
/// as marker loss.
MetricsReport compute_metrics(std::span<const TimedPose> estimated, std::span<const TimedPose> truth,
                              std::span<const double> frame_seconds);

/// Detected frames of a tracking output as a pose stream.
std::vector<TimedPose> to_pose_stream(std::span<const std::optional<FusedPose>> track);

struct SetupSummary {
  std::string preset;
  MeanStd ape_translation_mm;
  MeanStd ape_rotation_deg;
  MeanStd marker_loss_pct;
  MeanStd jitter_raw_pct;
  MeanStd jitter_filtered_pct;
  MeanStd fps;
  std::vector<MetricsReport> raw_trials;
  std::vector<MetricsReport> filtered_trials;
};

/// Runs `trials` seeded tracking scenarios of one preset through the
/// tracking loop. APE is taken from the filtered track.
SetupSummary run_tracking_trials(const ScenarioConfig& preset, std::size_t trials, const OneEuroParams& filter = {});

}  // namespace mranchor
