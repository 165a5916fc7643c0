#include "mranchor/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "mranchor/error.hpp"
#include "mranchor/hand_eye.hpp"
#include "mranchor/io.hpp"

namespace mranchor::harness {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Format, path.string() + ": " + e.what());
  }
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

json metrics_json(const MetricsReport& m) {
  return {{"ape_translation_mm", mean_std_json(m.ape_translation_mm)},
          {"ape_rotation_deg", mean_std_json(m.ape_rotation_deg)},
          {"marker_loss_pct", 100.0 * m.jfp.marker_loss_rate},
          {"pose_jitter_pct", 100.0 * m.jfp.pose_jitter_rate},
          {"frames_total", m.jfp.frames_total},
          {"frames_lost", m.jfp.frames_lost},
          {"jitter_transitions", m.jfp.jitter_transitions},
          {"detected_pairs", m.jfp.detected_pairs}};
}

json transform_json(const RigidTransform& t) {
  const auto& q = t.rotation();
  const auto& p = t.translation();
  return {{"q", {q.w(), q.x(), q.y(), q.z()}}, {"p", {p.x(), p.y(), p.z()}}};
}

ScenarioConfig read_scenario(const fs::path& dir) {
  const json j = read_json(dir / "scenario.json");
  try {
    ScenarioConfig config = scenario_preset(j.at("name").get<std::string>());
    config.seed = j.at("seed").get<std::uint64_t>();
    config.frame_count = j.at("frame_count").get<std::size_t>();
    return config;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, (dir / "scenario.json").string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::Format, (dir / "scenario.json").string() + ": " + e.what());
  }
}

std::vector<double> frame_clock(const std::vector<TimedPose>& truth) {
  std::vector<double> t;
  t.reserve(truth.size());
  for (const auto& p : truth) t.push_back(p.timestamp);
  return t;
}

// ---------------------------------------------------------------------------

std::string evaluate_tracking(const fs::path& dir, const ScenarioConfig& config, json& metrics) {
  const MarkerRig rig = io::read_rig(dir / "rig.json");
  const auto log = io::read_marker_log(dir / "markers.jsonl");
  const auto truth = io::read_pose_stream(dir / "truth.jsonl");
  const auto clock = frame_clock(truth);
  const auto frames = group_frames(log, clock);
  const TrackingOutput track = track_markers(frames, rig, OneEuroParams{});
  const MetricsReport raw = compute_metrics(to_pose_stream(track.raw), truth, track.frame_seconds);
  const MetricsReport filtered = compute_metrics(to_pose_stream(track.filtered), truth, track.frame_seconds);
  metrics["raw"] = metrics_json(raw);
  metrics["filtered"] = metrics_json(filtered);
  write_json(dir / "throughput.json", {{"scenario", config.name}, {"throughput_fps", filtered.throughput_fps}});
  return "APE " + fixed2(filtered.ape_translation_mm.mean) + " +/- " + fixed2(filtered.ape_translation_mm.std) +
         " mm, " + fixed2(filtered.ape_rotation_deg.mean) + " +/- " + fixed2(filtered.ape_rotation_deg.std) +
         " deg; loss " + fixed2(100.0 * filtered.jfp.marker_loss_rate) + "%; jitter raw " +
         fixed2(100.0 * raw.jfp.pose_jitter_rate) + "% filtered " + fixed2(100.0 * filtered.jfp.pose_jitter_rate) +
         "%";
}

std::string evaluate_calibration(const fs::path& dir, json& metrics) {
  const auto headset = io::read_pose_stream(dir / "headset.jsonl");
  const auto marker = io::read_pose_stream(dir / "marker.jsonl");
  const auto val_headset = io::read_pose_stream(dir / "validation_headset.jsonl");
  const auto val_camera = io::read_pose_stream(dir / "validation_camera.jsonl");
  const RigidTransform x_true = io::read_transform(dir / "truth.json");

  const auto pairs = build_motion_pairs(headset, marker);
  const CalibrationResult result = solve_hand_eye(pairs);
  const PoseError err = pose_error(result.x, x_true);
  const double corrected = corrected_trajectory_rmse(result.x, val_camera, val_headset);
  const double uncorrected = corrected_trajectory_rmse(RigidTransform::identity(), val_camera, val_headset);
  metrics["x"] = transform_json(result.x);
  metrics["pairs_used"] = result.pairs_used;
  metrics["x_error_mm"] = 1000.0 * err.translation_error;
  metrics["x_error_deg"] = rad2deg(err.rotation_error);
  metrics["corrected_rmse_mm"] = 1000.0 * corrected;
  metrics["uncorrected_rmse_mm"] = 1000.0 * uncorrected;
  return "X error " + fixed2(1000.0 * err.translation_error) + " mm / " + fixed2(rad2deg(err.rotation_error)) +
         " deg; trajectory RMSE " + fixed2(1000.0 * corrected) + " mm corrected, " + fixed2(1000.0 * uncorrected) +
         " mm uncorrected";
}

std::string evaluate_head(const fs::path& dir, const ScenarioConfig& config, json& metrics) {
  const PointCloud head_template = io::read_ply(dir / "template.ply");
  const PointCloud scene = io::read_ply(dir / "scene.ply");
  const RegionOfInterest roi = io::read_roi(dir / "roi.json");
  const RigidTransform t_true = io::read_transform(dir / "truth.json");
  LocateParams params;
  params.seed = config.seed;
  const HeadLocalization h = locate_head(head_template, scene, roi, params);
  const PoseError coarse = pose_error(h.coarse.transform, t_true);
  const PoseError refined = pose_error(h.refined.transform, t_true);
  metrics["t_b"] = transform_json(h.refined.transform);
  metrics["converged"] = h.refined.converged;
  metrics["fitness"] = h.refined.fitness;
  metrics["inlier_rmse_mm"] = 1000.0 * h.refined.inlier_rmse;
  metrics["roi_points"] = h.roi_points;
  metrics["coarse_error_mm"] = 1000.0 * coarse.translation_error;
  metrics["coarse_error_deg"] = rad2deg(coarse.rotation_error);
  metrics["error_mm"] = 1000.0 * refined.translation_error;
  metrics["error_deg"] = rad2deg(refined.rotation_error);
  return std::string(h.refined.converged ? "converged" : "not converged") + "; error " +
         fixed2(1000.0 * refined.translation_error) + " mm / " + fixed2(rad2deg(refined.rotation_error)) +
         " deg (coarse " + fixed2(1000.0 * coarse.translation_error) + " mm / " +
         fixed2(rad2deg(coarse.rotation_error)) + " deg); fitness " + fixed2(h.refined.fitness);
}

std::string evaluate_guidance(const fs::path& dir, json& metrics) {
  ExpertTrajectory trajectory;
  trajectory.samples = io::read_pose_stream(dir / "expert.jsonl");
  trajectory.checkpoints = io::read_checkpoints(dir / "checkpoints.json");
  trajectory.validate();
  if (trajectory.samples.empty()) throw Error(ErrorCode::Format, "expert.jsonl: no samples");
  const RigidTransform anchor = io::read_transform(dir / "anchor.json");
  const auto wrist = io::read_pose_stream(dir / "wrist.jsonl");

  GuidanceState state;
  json events = json::array();
  std::size_t prompts = 0;
  std::size_t passed = 0;
  for (std::size_t i = 0; i < wrist.size(); ++i) {
    const std::size_t idx = std::min(state.playback_index, trajectory.samples.size() - 1);
    const GuidanceStep step =
        guidance_step(state, trajectory, wrist[i].pose, anchor * trajectory.samples[idx].pose);
    if (step.event != GuidanceEvent::None) {
      events.push_back({{"frame", i}, {"event", to_string(step.event)}, {"playback_index", step.state.playback_index}});
      prompts += step.event == GuidanceEvent::CorrectivePrompt;
      passed += step.event == GuidanceEvent::CheckpointPassed;
    }
    state = step.state;
  }
  metrics["final_phase"] = to_string(state.phase);
  metrics["steps"] = wrist.size();
  metrics["checkpoints_passed"] = passed;
  metrics["corrective_prompts"] = prompts;
  metrics["events"] = events;
  return std::string("final phase ") + to_string(state.phase) + "; " + std::to_string(passed) + "/" +
         std::to_string(trajectory.checkpoints.size()) + " checkpoints passed, " + std::to_string(prompts) +
         " corrective prompts";
}

}  // namespace

ScenarioKind scenario_kind(const ScenarioConfig& config) {
  const std::string& n = config.name;
  if (n.starts_with("table1-")) return ScenarioKind::Tracking;
  if (n.starts_with("calibration")) return ScenarioKind::Calibration;
  if (n.starts_with("head-scene")) return ScenarioKind::HeadScene;
  if (n.starts_with("guidance")) return ScenarioKind::Guidance;
  throw Error(ErrorCode::InvalidArgument, "no run layout for scenario '" + n + "'");
}

const char* to_string(ScenarioKind kind) noexcept {
  switch (kind) {
    case ScenarioKind::Tracking: return "tracking";
    case ScenarioKind::Calibration: return "calibration";
    case ScenarioKind::HeadScene: return "head-scene";
    case ScenarioKind::Guidance: return "guidance";
  }
  return "unknown";
}

RigidTransform nominal_headset_from_camera() {
  return RigidTransform::from_axis_angle(Eigen::Vector3d(0.3, 1.0, 0.2), deg2rad(8.0), {0.035, -0.06, 0.02});
}

void write_run(const ScenarioConfig& config, const fs::path& dir) {
  config.validate();
  const ScenarioKind kind = scenario_kind(config);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());

  switch (kind) {
    case ScenarioKind::Tracking: {
      const MarkerRig rig = rig_from_config(config);
      const TrackingScenario s = gen_tracking_scenario(config, rig);
      io::write_rig(dir / "rig.json", rig);
      io::write_marker_log(dir / "markers.jsonl", s.log);
      io::write_pose_stream(dir / "truth.jsonl", s.truth);
      break;
    }
    case ScenarioKind::Calibration: {
      const CalibrationScenario s = gen_calibration_scenario(config, nominal_headset_from_camera());
      io::write_pose_stream(dir / "headset.jsonl", s.headset_stream);
      io::write_pose_stream(dir / "marker.jsonl", s.marker_stream);
      io::write_pose_stream(dir / "validation_headset.jsonl", s.validation_headset);
      io::write_pose_stream(dir / "validation_camera.jsonl", s.validation_camera);
      io::write_transform(dir / "truth.json", s.x_true);
      io::write_transform(dir / "marker_offset.json", s.marker_offset);
      break;
    }
    case ScenarioKind::HeadScene: {
      const PointCloud head_template = make_head_template();
      const RigidTransform t_true = random_head_pose(config);
      const HeadScene s = gen_head_scene(config, head_template, t_true);
      io::write_ply(dir / "template.ply", head_template);
      io::write_ply(dir / "scene.ply", s.scene);
      io::write_roi(dir / "roi.json", s.roi);
      io::write_transform(dir / "truth.json", s.t_true);
      break;
    }
    case ScenarioKind::Guidance: {
      const GuidanceScenario s = gen_guidance_scenario(config);
      io::write_pose_stream(dir / "expert.jsonl", s.trajectory.samples);
      io::write_checkpoints(dir / "checkpoints.json", s.trajectory.checkpoints);
      io::write_transform(dir / "anchor.json", s.anchor);
      io::write_pose_stream(dir / "wrist.jsonl", s.wrist);
      break;
    }
  }
  write_json(dir / "scenario.json", {{"name", config.name},
                                     {"kind", to_string(kind)},
                                     {"seed", config.seed},
                                     {"frame_count", config.frame_count},
                                     {"frame_rate", config.frame_rate}});
}

std::string evaluate_run(const fs::path& dir) {
  const ScenarioConfig config = read_scenario(dir);
  const ScenarioKind kind = scenario_kind(config);
  json metrics = {{"scenario", config.name}, {"kind", to_string(kind)}, {"seed", config.seed}};
  std::string summary;
  switch (kind) {
    case ScenarioKind::Tracking: summary = evaluate_tracking(dir, config, metrics); break;
    case ScenarioKind::Calibration: summary = evaluate_calibration(dir, metrics); break;
    case ScenarioKind::HeadScene: summary = evaluate_head(dir, config, metrics); break;
    case ScenarioKind::Guidance: summary = evaluate_guidance(dir, metrics); break;
  }
  write_json(dir / "metrics.json", metrics);
  return config.name + ": " + summary;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

TrendRatios trend_ratios(const SetupSummary& rgb2, const SetupSummary& rgb4, const SetupSummary& rgbd2,
                         const SetupSummary& rgbd4) {
  const std::size_t n = std::min({rgb2.filtered_trials.size(), rgb4.filtered_trials.size(),
                                  rgbd2.filtered_trials.size(), rgbd4.filtered_trials.size()});
  std::vector<double> loss;
  std::vector<double> ape;
  std::vector<double> jitter;
  auto ratio = [](std::vector<double>& out, double num, double den) {
    if (den > 0.0) out.push_back(num / den);
  };
  for (std::size_t i = 0; i < n; ++i) {
    ratio(loss, rgb4.filtered_trials[i].jfp.marker_loss_rate, rgb2.filtered_trials[i].jfp.marker_loss_rate);
    ratio(loss, rgbd4.filtered_trials[i].jfp.marker_loss_rate, rgbd2.filtered_trials[i].jfp.marker_loss_rate);
    ratio(ape, rgbd2.filtered_trials[i].ape_translation_mm.mean, rgb2.filtered_trials[i].ape_translation_mm.mean);
    ratio(ape, rgbd4.filtered_trials[i].ape_translation_mm.mean, rgb4.filtered_trials[i].ape_translation_mm.mean);
    ratio(jitter, rgb2.filtered_trials[i].jfp.pose_jitter_rate, rgb2.raw_trials[i].jfp.pose_jitter_rate);
    ratio(jitter, rgb4.filtered_trials[i].jfp.pose_jitter_rate, rgb4.raw_trials[i].jfp.pose_jitter_rate);
  }
  return {median(loss), median(ape), median(jitter)};
}

std::string write_report(const fs::path& out, const ReportOptions& options) {
  if (options.trials == 0) throw Error(ErrorCode::InvalidArgument, "report: trials must be positive");
  const char* names[] = {"table1-2m-rgb", "table1-4m-rgb", "table1-2m-rgbd", "table1-4m-rgbd"};
  std::vector<SetupSummary> setups;
  for (const char* name : names) {
    ScenarioConfig config = scenario_preset(name);
    if (options.seed) config.seed = *options.seed;
    if (options.frames > 0) config.frame_count = options.frames;
    setups.push_back(run_tracking_trials(config, options.trials));
  }
  const TrendRatios trends = trend_ratios(setups[0], setups[1], setups[2], setups[3]);

  json rows = json::array();
  std::string table = "| Setup | APE translation (mm) | APE rotation (deg) | Marker loss (%) | Jitter raw (%) | "
                      "Jitter filtered (%) |";
  table += options.with_fps ? " FPS |\n" : "\n";
  table += "|---|---|---|---|---|---|";
  table += options.with_fps ? "---|\n" : "\n";
  auto pm = [](const MeanStd& m) { return fixed2(m.mean) + " ± " + fixed2(m.std); };
  for (const auto& s : setups) {
    json row = {{"setup", s.preset},
                {"ape_translation_mm", mean_std_json(s.ape_translation_mm)},
                {"ape_rotation_deg", mean_std_json(s.ape_rotation_deg)},
                {"marker_loss_pct", mean_std_json(s.marker_loss_pct)},
                {"jitter_raw_pct", mean_std_json(s.jitter_raw_pct)},
                {"jitter_filtered_pct", mean_std_json(s.jitter_filtered_pct)}};
    if (options.with_fps) row["fps"] = mean_std_json(s.fps);
    rows.push_back(row);
    table += "| " + s.preset + " | " + pm(s.ape_translation_mm) + " | " + pm(s.ape_rotation_deg) + " | " +
             pm(s.marker_loss_pct) + " | " + pm(s.jitter_raw_pct) + " | " + pm(s.jitter_filtered_pct) + " |";
    table += options.with_fps ? " " + fixed2(s.fps.mean) + " |\n" : "\n";
  }
  const json report = {{"trials", options.trials},
                       {"rows", rows},
                       {"trend_medians",
                        {{"loss_4m_over_2m", trends.loss_4m_over_2m},
                         {"ape_rgbd_over_rgb", trends.ape_rgbd_over_rgb},
                         {"jitter_filtered_over_raw", trends.jitter_filtered_over_raw}}}};
  write_json(out, report);
  table += "\nMedian trial ratios: 4-marker/2-marker loss " + fixed2(trends.loss_4m_over_2m) +
           ", RGB-D/RGB APE " + fixed2(trends.ape_rgbd_over_rgb) + ", filtered/raw jitter " +
           fixed2(trends.jitter_filtered_over_raw) + "\n";
  fs::path text = out;
  text.replace_extension(".txt");
  std::ofstream t(text, std::ios::trunc);
  if (!t) throw Error(ErrorCode::Io, "cannot open '" + text.string() + "' for writing");
  t << table;
  if (!t) throw Error(ErrorCode::Io, "write to '" + text.string() + "' failed");

  return std::to_string(options.trials) + " trials x 4 setups; loss ratio " + fixed2(trends.loss_4m_over_2m) +
         ", APE ratio " + fixed2(trends.ape_rgbd_over_rgb) + ", jitter ratio " +
         fixed2(trends.jitter_filtered_over_raw);
}

}  // namespace mranchor::harness
