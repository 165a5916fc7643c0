#include "mranchor/sim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mranchor/error.hpp"

namespace mranchor {
namespace {

// Natural cubic spline through uniformly spaced knots, one per dimension.
class CubicSpline {
 public:
  CubicSpline(std::vector<Eigen::VectorXd> knots, double interval)
      : knots_(std::move(knots)), interval_(interval) {
    const std::size_t n = knots_.size();
    const Eigen::Index dims = knots_.front().size();
    second_.assign(n, Eigen::VectorXd::Zero(dims));
    if (n < 3) return;
    // Tridiagonal system for interior second derivatives (Thomas algorithm).
    const std::size_t m = n - 2;
    std::vector<double> c(m, 0.0);
    std::vector<Eigen::VectorXd> d(m);
    const double h2 = interval_ * interval_;
    for (std::size_t i = 0; i < m; ++i) {
      const Eigen::VectorXd rhs = 6.0 * (knots_[i + 2] - 2.0 * knots_[i + 1] + knots_[i]) / h2;
      const double b = 4.0 - (i > 0 ? c[i - 1] : 0.0);
      c[i] = 1.0 / b;
      d[i] = i > 0 ? Eigen::VectorXd((rhs - d[i - 1]) / b) : Eigen::VectorXd(rhs / b);
    }
    for (std::size_t i = m; i-- > 0;) {
      second_[i + 1] = i + 1 < m ? Eigen::VectorXd(d[i] - c[i] * second_[i + 2]) : d[i];
    }
  }

  Eigen::VectorXd operator()(double t) const {
    const double x = std::clamp(t / interval_, 0.0, static_cast<double>(knots_.size() - 1));
    std::size_t i = std::min(static_cast<std::size_t>(x), knots_.size() - 2);
    const double u = x - static_cast<double>(i);
    const double a = 1.0 - u;
    const double h2 = interval_ * interval_;
    return a * knots_[i] + u * knots_[i + 1] +
           ((a * a * a - a) * second_[i] + (u * u * u - u) * second_[i + 1]) * h2 / 6.0;
  }

 private:
  std::vector<Eigen::VectorXd> knots_;
  double interval_;
  std::vector<Eigen::VectorXd> second_;
};

class RandomTrajectory {
 public:
  RandomTrajectory(const TrajectorySpec& spec, double duration, std::mt19937_64& rng)
      : base_(spec.base), spline_(make_knots(spec, duration, rng), spec.waypoint_interval) {}

  RigidTransform operator()(double t) const {
    const Eigen::VectorXd v = spline_(t);
    return base_ * RigidTransform(exp_rotation(v.head<3>()), v.tail<3>());
  }

 private:
  static std::vector<Eigen::VectorXd> make_knots(const TrajectorySpec& spec, double duration, std::mt19937_64& rng) {
    if (!(spec.waypoint_interval > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "trajectory: waypoint interval must be positive");
    }
    const auto count = static_cast<std::size_t>(std::ceil(duration / spec.waypoint_interval)) + 2;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Eigen::VectorXd> knots(count, Eigen::VectorXd::Zero(6));
    for (auto& k : knots) {
      for (int i = 0; i < 3; ++i) k[i] = spec.rotation_amplitude * unit(rng);
      for (int i = 3; i < 6; ++i) k[i] = spec.translation_amplitude * unit(rng);
    }
    return knots;
  }

  RigidTransform base_;
  CubicSpline spline_;
};

Eigen::Vector3d gaussian3(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return Eigen::Vector3d::Zero();
  std::normal_distribution<double> n(0.0, sigma);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return {x, y, z};
}

RigidTransform perturb(const RigidTransform& t, std::mt19937_64& rng, double sigma_t, double sigma_r) {
  const Eigen::Vector3d dr = gaussian3(rng, sigma_r);
  const Eigen::Vector3d dt = gaussian3(rng, sigma_t);
  return RigidTransform(exp_rotation(dr) * t.rotation(), t.translation() + dt);
}

Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d v;
  do {
    for (int i = 0; i < 4; ++i) v[i] = n(rng);
  } while (v.norm() < 1e-9);
  v.normalize();
  return Eigen::Quaterniond(v[0], v[1], v[2], v[3]);
}

RigidTransform tilted_marker(double x, double y, double tilt_y, double tilt_x) {
  const Eigen::Quaterniond r = Eigen::Quaterniond(Eigen::AngleAxisd(tilt_y, Eigen::Vector3d::UnitY())) *
                               Eigen::Quaterniond(Eigen::AngleAxisd(tilt_x, Eigen::Vector3d::UnitX()));
  return {r, Eigen::Vector3d(x, y, 0.0)};
}

// Model frame looking back at the camera: camera-frame rotation of 180
// degrees about x, so model +z points at the sensor.
RigidTransform facing_camera(const Eigen::Vector3d& position) {
  return RigidTransform::from_axis_angle(Eigen::Vector3d::UnitX(), std::numbers::pi, position);
}

ScenarioConfig table1_preset(int markers, bool depth) {
  ScenarioConfig c;
  c.name = std::string("table1-") + (markers == 2 ? "2m" : "4m") + (depth ? "-rgbd" : "-rgb");
  c.seed = 1;
  c.frame_count = 1000;
  c.frame_rate = 30.0;
  c.depth_mode = depth ? DepthMode::RgbD : DepthMode::RgbProxy;
  c.marker_size = 0.08;
  c.occlusion.visibility = 0.62;
  c.occlusion.view_cone = deg2rad(75.0);
  c.trajectory.base = facing_camera({0.0, 0.05, 0.75});
  c.trajectory.translation_amplitude = 0.01;
  c.trajectory.rotation_amplitude = deg2rad(3.0);
  c.trajectory.waypoint_interval = 3.0;
  if (markers == 2) {
    c.markers = {{0, tilted_marker(-0.13, 0.0, deg2rad(20.0), 0.0)},
                 {1, tilted_marker(0.13, 0.0, deg2rad(-20.0), 0.0)}};
  } else {
    c.markers = {{0, tilted_marker(-0.13, 0.06, deg2rad(20.0), deg2rad(-8.0))},
                 {1, tilted_marker(-0.13, -0.06, deg2rad(20.0), deg2rad(8.0))},
                 {2, tilted_marker(0.13, 0.06, deg2rad(-20.0), deg2rad(-8.0))},
                 {3, tilted_marker(0.13, -0.06, deg2rad(-20.0), deg2rad(8.0))}};
  }
  return c;
}

ScenarioConfig calibration_preset(bool noisy) {
  ScenarioConfig c;
  c.name = noisy ? "calibration" : "calibration-clean";
  c.seed = 1;
  c.frame_count = 41;
  c.frame_rate = 1.0;
  c.trajectory.base = RigidTransform::from_translation({0.0, -0.05, 0.5});
  c.trajectory.translation_amplitude = 0.12;
  c.trajectory.rotation_amplitude = deg2rad(35.0);
  c.trajectory.waypoint_interval = 1.0;
  c.marker_on_controller =
      RigidTransform::from_axis_angle(Eigen::Vector3d(0.2, 1.0, -0.4), deg2rad(25.0), {0.02, 0.035, -0.01});
  c.noise = NoiseModel{};
  if (noisy) {
    c.noise.marker_translation_sigma = 0.002;
    c.noise.marker_rotation_sigma = deg2rad(0.2);
  } else {
    c.noise.corner_pixel_sigma = 0.0;
    c.noise.depth_sigma = 0.0;
    c.noise.cloud_sigma = 0.0;
  }
  return c;
}

ScenarioConfig head_scene_preset() {
  ScenarioConfig c;
  c.name = "head-scene";
  c.seed = 1;
  c.frame_count = 2;
  c.noise.cloud_sigma = 0.001;
  c.head.visibility = 0.6;
  c.head.roi.center = RigidTransform::from_translation({0.0, 0.0, 0.6});
  c.head.roi.half_extents = {0.15, 0.15, 0.15};
  return c;
}

ScenarioConfig guidance_preset() {
  ScenarioConfig c;
  c.name = "guidance";
  c.seed = 1;
  c.frame_count = 120;
  c.frame_rate = 30.0;
  c.trajectory.base = RigidTransform::from_translation({0.05, -0.15, 0.45});
  return c;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (frame_count < 2) throw Error(ErrorCode::InvalidArgument, "scenario: frame_count must be at least 2");
  if (!(frame_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "scenario: frame_rate must be positive");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(occlusion.visibility) || !prob(noise.depth_dropout) || !prob(head.visibility) ||
      !prob(head.sample_fraction)) {
    throw Error(ErrorCode::InvalidArgument, "scenario: probabilities must lie in [0, 1]");
  }
  const double sigmas[] = {noise.corner_pixel_sigma,          noise.depth_sigma,
                           noise.rgb_depth_sigma,             noise.cloud_sigma,
                           noise.controller_translation_sigma, noise.controller_rotation_sigma,
                           noise.marker_translation_sigma,     noise.marker_rotation_sigma};
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw Error(ErrorCode::InvalidArgument, "scenario: noise sigmas must be non-negative");
  }
  if (!(marker_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "scenario: marker_size must be positive");
  intrinsics.validate();
  head.roi.validate();
}

std::vector<std::string> preset_names() {
  return {"table1-2m-rgb", "table1-2m-rgbd", "table1-4m-rgb", "table1-4m-rgbd",
          "calibration",   "calibration-clean", "head-scene", "guidance"};
}

ScenarioConfig scenario_preset(std::string_view name) {
  if (name == "table1-2m-rgb") return table1_preset(2, false);
  if (name == "table1-2m-rgbd") return table1_preset(2, true);
  if (name == "table1-4m-rgb") return table1_preset(4, false);
  if (name == "table1-4m-rgbd") return table1_preset(4, true);
  if (name == "calibration") return calibration_preset(true);
  if (name == "calibration-clean") return calibration_preset(false);
  if (name == "head-scene") return head_scene_preset();
  if (name == "guidance") return guidance_preset();
  throw Error(ErrorCode::InvalidArgument, "unknown scenario preset '" + std::string(name) + "'");
}

MarkerRig rig_from_config(const ScenarioConfig& config) {
  MarkerRig rig;
  rig.marker_size = config.marker_size;
  rig.intrinsics = config.intrinsics;
  for (const auto& m : config.markers) rig.offsets[m.id] = m.pose_in_model.inverse();
  return rig;
}

std::uint64_t trial_seed(std::uint64_t base, std::uint64_t trial) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (trial + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------

CalibrationScenario gen_calibration_scenario(const ScenarioConfig& config, const RigidTransform& x_true) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const double dt = 1.0 / config.frame_rate;
  const double duration = dt * static_cast<double>(config.frame_count);
  const RigidTransform camera_from_headset = x_true.inverse();

  CalibrationScenario out;
  out.x_true = x_true;
  out.marker_offset = config.marker_on_controller;

  auto record = [&](const RigidTransform& marker_offset, std::vector<TimedPose>& headset,
                    std::vector<TimedPose>& camera) {
    const RandomTrajectory controller(config.trajectory, duration, rng);
    for (std::size_t i = 0; i < config.frame_count; ++i) {
      const double t = dt * static_cast<double>(i);
      const RigidTransform p = controller(t);
      const RigidTransform m = camera_from_headset * p * marker_offset;
      headset.push_back({t, perturb(p, rng, config.noise.controller_translation_sigma,
                                    config.noise.controller_rotation_sigma)});
      camera.push_back(
          {t, perturb(m, rng, config.noise.marker_translation_sigma, config.noise.marker_rotation_sigma)});
    }
  };
  record(config.marker_on_controller, out.headset_stream, out.marker_stream);
  record(RigidTransform::identity(), out.validation_headset, out.validation_camera);
  return out;
}

TrackingScenario gen_tracking_scenario(const ScenarioConfig& config, const MarkerRig& rig) {
  config.validate();
  if (rig.offsets.size() != config.markers.size()) {
    throw Error(ErrorCode::InvalidArgument, "gen_tracking_scenario: rig marker count does not match the config");
  }
  std::mt19937_64 rng(config.seed);
  const double dt = 1.0 / config.frame_rate;
  const RandomTrajectory manikin(config.trajectory, dt * static_cast<double>(config.frame_count), rng);
  const auto canonical = canonical_marker_corners(rig.marker_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> pixel_noise(0.0, 1.0);
  const double depth_sigma =
      config.depth_mode == DepthMode::RgbD ? config.noise.depth_sigma : config.noise.rgb_depth_sigma;

  TrackingScenario out;
  out.truth.reserve(config.frame_count);
  for (std::size_t f = 0; f < config.frame_count; ++f) {
    const double t = dt * static_cast<double>(f);
    const RigidTransform model = manikin(t);
    out.truth.push_back({t, model});
    for (const auto& [id, offset] : rig.offsets) {
      // Draw every random number regardless of visibility so that toggling
      // one marker does not shift the others' noise.
      const double visible_draw = unit(rng);
      std::array<double, 12> draws{};
      for (auto& d : draws) d = pixel_noise(rng);
      std::array<double, 4> dropout{};
      for (auto& d : dropout) d = unit(rng);

      const RigidTransform marker = model * offset.inverse();
      const Eigen::Vector3d center = marker.translation();
      const Eigen::Vector3d normal = marker.rotation() * Eigen::Vector3d::UnitZ();
      const double cos_view = normal.dot(-center.normalized());
      if (visible_draw >= config.occlusion.visibility || cos_view < std::cos(config.occlusion.view_cone)) continue;

      MarkerObservation obs;
      obs.marker_id = id;
      obs.timestamp = t;
      bool in_image = true;
      for (int c = 0; c < 4; ++c) {
        const Eigen::Vector3d corner = marker.apply(canonical[c]);
        if (corner.z() <= 0.0) {
          in_image = false;
          break;
        }
        const Eigen::Vector2d pixel =
            project_point(corner, rig.intrinsics) +
            config.noise.corner_pixel_sigma * Eigen::Vector2d(draws[3 * c], draws[3 * c + 1]);
        if (!rig.intrinsics.contains(pixel)) {
          in_image = false;
          break;
        }
        obs.corners_2d[c] = pixel;
        const double depth = corner.z() + depth_sigma * draws[3 * c + 2];
        obs.valid_depth[c] = dropout[c] >= config.noise.depth_dropout && depth > 0.0;
        obs.corners_3d[c] = obs.valid_depth[c] ? backproject_corner(pixel, depth, rig.intrinsics)
                                               : Eigen::Vector3d::Zero();
      }
      if (in_image) out.log.push_back(obs);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

PointCloud make_head_template(const HeadTemplateSpec& spec) {
  const Eigen::Vector3d& ax = spec.semi_axes;

  auto bump = [](const Eigen::Vector3d& u, const Eigen::Vector3d& dir, double height, double width) {
    const double ang = std::acos(std::clamp(u.dot(dir), -1.0, 1.0));
    return height * std::exp(-0.5 * (ang * ang) / (width * width));
  };
  auto surface = [&](const Eigen::Vector3d& dir) -> Eigen::Vector3d {
    const Eigen::Vector3d u = dir.normalized();
    const double inv = std::sqrt(std::pow(u.x() / ax.x(), 2) + std::pow(u.y() / ax.y(), 2) + std::pow(u.z() / ax.z(), 2));
    double r = 1.0 / inv;
    for (const auto& f : spec.features) r += bump(u, f.direction.normalized(), f.height, f.width);
    return r * u;
  };

  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(spec.samples));
  cloud.normals.reserve(static_cast<std::size_t>(spec.samples));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double eps = 1e-5;
  for (int i = 0; i < spec.samples; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / spec.samples;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Eigen::Vector3d u(rho * std::cos(phi), rho * std::sin(phi), z);

    Eigen::Vector3d t1 = u.unitOrthogonal();
    Eigen::Vector3d t2 = u.cross(t1);
    const Eigen::Vector3d p = surface(u);
    const Eigen::Vector3d d1 = surface(u + eps * t1) - surface(u - eps * t1);
    const Eigen::Vector3d d2 = surface(u + eps * t2) - surface(u - eps * t2);
    Eigen::Vector3d n = d1.cross(d2).normalized();
    if (n.dot(p) < 0.0) n = -n;
    cloud.points.push_back(p);
    cloud.normals.push_back(n);
  }
  return cloud;
}

RigidTransform random_head_pose(const ScenarioConfig& config) {
  std::mt19937_64 rng(trial_seed(config.seed, 0x4EADULL));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Eigen::Vector3d offset(unit(rng), unit(rng), unit(rng));
  const Eigen::Quaterniond q = random_rotation(rng);
  return {q, config.head.roi.center.apply(config.head.placement_jitter * offset)};
}

HeadScene gen_head_scene(const ScenarioConfig& config, const PointCloud& head_template, const RigidTransform& t_true) {
  config.validate();
  const HeadSceneSpec& spec = config.head;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  HeadScene out;
  out.t_true = t_true;
  out.roi = spec.roi;

  if (!head_template.empty()) {
    PointCloud placed = transform_cloud(head_template, t_true);
    if (!placed.has_normals()) placed = estimate_normals_outward(placed, 20);
    // Camera at the origin: of the camera-facing points, keep the most
    // frontal fraction.
    std::vector<std::pair<double, std::size_t>> facing;
    for (std::size_t i = 0; i < placed.size(); ++i) {
      const double score = -placed.normals[i].dot(placed.points[i].normalized());
      if (score > 0.0) facing.emplace_back(score, i);
    }
    std::stable_sort(facing.begin(), facing.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto keep = static_cast<std::size_t>(std::llround(spec.visibility * static_cast<double>(facing.size())));
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < keep; ++k) kept.push_back(facing[k].second);
    std::sort(kept.begin(), kept.end());
    for (std::size_t i : kept) {
      if (unit(rng) >= spec.sample_fraction) continue;
      out.scene.points.push_back(placed.points[i] + gaussian3(rng, config.noise.cloud_sigma));
    }
  }

  // Tilted patch inside the ROI, standing in for non-head geometry.
  if (spec.clutter_points > 0) {
    const RigidTransform patch =
        spec.roi.center * RigidTransform::from_axis_angle(Eigen::Vector3d(1.0, 0.4, 0.0), deg2rad(35.0),
                                                          {0.0, 0.0, 0.05});
    std::uniform_real_distribution<double> span(-0.1, 0.1);
    for (std::size_t i = 0; i < spec.clutter_points; ++i) {
      const Eigen::Vector3d local(span(rng), span(rng), 0.0);
      const Eigen::Vector3d p = patch.apply(local) + gaussian3(rng, config.noise.cloud_sigma);
      out.scene.points.push_back(p);
    }
  }

  if (spec.background) {
    // Wall behind the ROI, entirely outside it.
    const Eigen::Vector3d c = spec.roi.center.translation();
    const double z = c.z() + spec.roi.half_extents.z() + 0.1;
    for (double x = -0.4; x <= 0.4 + 1e-12; x += 0.005) {
      for (double y = -0.4; y <= 0.4 + 1e-12; y += 0.005) {
        out.scene.points.push_back(Eigen::Vector3d(c.x() + x, c.y() + y, z) + gaussian3(rng, config.noise.cloud_sigma));
      }
    }
  }
  return out;
}

GuidanceScenario gen_guidance_scenario(const ScenarioConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const double dt = 1.0 / config.frame_rate;
  const std::size_t n = config.frame_count;
  if (n < 10) throw Error(ErrorCode::InvalidArgument, "guidance scenario needs at least 10 frames");

  GuidanceScenario out;
  out.anchor = config.trajectory.base;
  // Expert sweep: a gentle arc with a wrist roll, in the anchor frame.
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(n - 1);
    const Eigen::Vector3d p(0.12 * std::sin(s * std::numbers::pi), 0.08 * s, -0.04 * s * s);
    out.trajectory.samples.push_back(
        {dt * static_cast<double>(i), RigidTransform::from_axis_angle(Eigen::Vector3d::UnitZ(), deg2rad(60.0) * s, p)});
  }
  for (int k = 1; k <= 4; ++k) {
    out.trajectory.checkpoints.push_back({static_cast<std::size_t>((n - 1) * k / 5), 0.03});
  }
  out.trajectory.validate();

  // Closed-loop trainee: approach, follow with small noise, stray once at
  // the second checkpoint, then re-align.
  const Eigen::Vector3d start_offset(0.25, 0.1, -0.05);
  const std::size_t approach = 25;
  const std::size_t stray_frames = 12;
  GuidanceState state;
  std::size_t strayed = 0;
  double t = 0.0;
  for (std::size_t frame = 0; frame < 4 * n && state.phase != GuidancePhase::Completed; ++frame, t += dt) {
    const std::size_t idx = std::min(state.playback_index, n - 1);
    const RigidTransform expert = out.anchor * out.trajectory.samples[idx].pose;
    Eigen::Vector3d offset = gaussian3(rng, 0.003);
    if (frame < approach) {
      offset += start_offset * (1.0 - static_cast<double>(frame) / approach);
    } else if (state.next_checkpoint == 1 && strayed < stray_frames &&
               (state.playback_index == out.trajectory.checkpoints[1].sample_index || strayed > 0)) {
      offset += Eigen::Vector3d(0.06, 0.0, 0.0);
      ++strayed;
    }
    const RigidTransform wrist(expert.rotation(), expert.translation() + offset);
    out.wrist.push_back({t, wrist});
    state = guidance_step(state, out.trajectory, wrist, expert).state;
  }
  return out;
}

// ---------------------------------------------------------------------------

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  if (values.empty()) return m;
  const auto n = static_cast<double>(values.size());
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(ss / n);
  return m;
}

MetricsReport compute_metrics(std::span<const TimedPose> estimated, std::span<const TimedPose> truth,
                              std::span<const double> frame_seconds) {
  if (truth.size() < 2) throw Error(ErrorCode::StreamMismatch, "compute_metrics: truth track needs 2 frames");
  std::vector<std::optional<RigidTransform>> per_frame(truth.size());
  std::vector<double> trans_mm;
  std::vector<double> rot_deg;
  std::size_t cursor = 0;
  for (const auto& est : estimated) {
    while (cursor < truth.size() && truth[cursor].timestamp < est.timestamp - 1e-9) ++cursor;
    if (cursor == truth.size() || std::abs(truth[cursor].timestamp - est.timestamp) > 1e-9 || per_frame[cursor]) {
      throw Error(ErrorCode::StreamMismatch,
                  "compute_metrics: estimate at t=" + std::to_string(est.timestamp) + " has no truth frame");
    }
    per_frame[cursor] = est.pose;
    const PoseError e = pose_error(est.pose, truth[cursor].pose);
    trans_mm.push_back(e.translation_error * 1000.0);
    rot_deg.push_back(rad2deg(e.rotation_error));
  }

  MetricsReport r;
  r.ape_translation_mm = mean_std(trans_mm);
  r.ape_rotation_deg = mean_std(rot_deg);
  r.jfp = jitter_stats(per_frame);
  r.frames_evaluated = trans_mm.size();
  const double total = std::accumulate(frame_seconds.begin(), frame_seconds.end(), 0.0);
  r.throughput_fps = total > 0.0 ? static_cast<double>(frame_seconds.size()) / total : 0.0;
  return r;
}

std::vector<TimedPose> to_pose_stream(std::span<const std::optional<FusedPose>> track) {
  std::vector<TimedPose> out;
  for (const auto& f : track) {
    if (f) out.push_back({f->timestamp, f->pose});
  }
  return out;
}

SetupSummary run_tracking_trials(const ScenarioConfig& preset, std::size_t trials, const OneEuroParams& filter) {
  SetupSummary s;
  s.preset = preset.name;
  std::vector<double> ape_t, ape_r, loss, jit_raw, jit_filt, fps;
  for (std::size_t i = 0; i < trials; ++i) {
    ScenarioConfig cfg = preset;
    cfg.seed = trial_seed(preset.seed, i);
    const MarkerRig rig = rig_from_config(cfg);
    const TrackingScenario scenario = gen_tracking_scenario(cfg, rig);
    std::vector<double> frame_times;
    frame_times.reserve(scenario.truth.size());
    for (const auto& p : scenario.truth) frame_times.push_back(p.timestamp);
    const auto frames = group_frames(scenario.log, frame_times);
    const TrackingOutput track = track_markers(frames, rig, filter);

    const MetricsReport raw = compute_metrics(to_pose_stream(track.raw), scenario.truth, track.frame_seconds);
    const MetricsReport filtered =
        compute_metrics(to_pose_stream(track.filtered), scenario.truth, track.frame_seconds);
    ape_t.push_back(filtered.ape_translation_mm.mean);
    ape_r.push_back(filtered.ape_rotation_deg.mean);
    loss.push_back(100.0 * filtered.jfp.marker_loss_rate);
    jit_raw.push_back(100.0 * raw.jfp.pose_jitter_rate);
    jit_filt.push_back(100.0 * filtered.jfp.pose_jitter_rate);
    fps.push_back(filtered.throughput_fps);
    s.raw_trials.push_back(raw);
    s.filtered_trials.push_back(filtered);
  }
  s.ape_translation_mm = mean_std(ape_t);
  s.ape_rotation_deg = mean_std(ape_r);
  s.marker_loss_pct = mean_std(loss);
  s.jitter_raw_pct = mean_std(jit_raw);
  s.jitter_filtered_pct = mean_std(jit_filt);
  s.fps = mean_std(fps);
  return s;
}

}  // namespace mranchor
