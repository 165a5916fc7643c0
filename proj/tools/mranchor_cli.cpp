// mranchor command-line front end. Links only the C interface.

#include <CLI11.hpp>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "mranchor/mranchor.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

struct UsageError {
  std::string message;
};

int fail(mra_status status) {
  std::fprintf(stderr, "error: %s: %s\n", mra_status_string(status), mra_last_error());
  return mra_status_is_io(status) ? kExitIo : kExitDomain;
}

std::optional<std::uint64_t> parse_seed(const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  errno = 0;
  const unsigned long long v = std::strtoull(text.c_str(), nullptr, 10);
  if (errno == ERANGE) return std::nullopt;
  return static_cast<std::uint64_t>(v);
}

// --seed, then MRANCHOR_SEED, then the preset's own seed.
std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  const char* env = std::getenv("MRANCHOR_SEED");
  if (!env || !*env) return std::nullopt;
  auto seed = parse_seed(env);
  if (!seed) throw UsageError{"MRANCHOR_SEED: expected an unsigned integer, got '" + std::string(env) + "'"};
  return seed;
}

void print_transform(const char* label, const mra_transform& t) {
  std::printf("%s q [%.9f, %.9f, %.9f, %.9f] p [%.9f, %.9f, %.9f]", label, t.q[0], t.q[1], t.q[2], t.q[3], t.p[0],
              t.p[1], t.p[2]);
}

struct PoseStream {
  mra_pose_stream* handle = nullptr;
  ~PoseStream() { mra_pose_stream_free(handle); }
};
struct Cloud {
  mra_cloud* handle = nullptr;
  ~Cloud() { mra_cloud_free(handle); }
};

// ---- calibrate ---------------------------------------------------------------

struct CalibrateArgs {
  std::string headset;
  std::string marker;
  std::string out;
  std::string validation_headset;
  std::string validation_camera;
  bool all_pairs = false;
  double min_rotation_deg = 0.0;
};

int run_calibrate(const CalibrateArgs& a) {
  PoseStream headset;
  PoseStream marker;
  mra_status s = mra_pose_stream_load(a.headset.c_str(), &headset.handle);
  if (s != MRA_OK) return fail(s);
  if ((s = mra_pose_stream_load(a.marker.c_str(), &marker.handle)) != MRA_OK) return fail(s);

  mra_calibration_options options;
  mra_calibration_options_default(&options);
  options.all_pairs = a.all_pairs;
  if (a.min_rotation_deg > 0.0) options.min_rotation_deg = a.min_rotation_deg;
  mra_calibration_result r;
  if ((s = mra_calibrate(headset.handle, marker.handle, &options, &r)) != MRA_OK) return fail(s);
  if (!a.out.empty() && (s = mra_transform_save(&r.x, a.out.c_str())) != MRA_OK) return fail(s);

  double rmse = -1.0;
  if (!a.validation_headset.empty()) {
    PoseStream vh;
    PoseStream vc;
    if ((s = mra_pose_stream_load(a.validation_headset.c_str(), &vh.handle)) != MRA_OK) return fail(s);
    if ((s = mra_pose_stream_load(a.validation_camera.c_str(), &vc.handle)) != MRA_OK) return fail(s);
    if ((s = mra_corrected_rmse(&r.x, vc.handle, vh.handle, options.sync_tolerance, &rmse)) != MRA_OK) return fail(s);
  }
  print_transform("headset_from_camera", r.x);
  std::printf(" pairs %zu residual %.3e rad %.3e m", r.pairs_used, r.rotation_residual, r.translation_residual);
  if (rmse >= 0.0) std::printf(" corrected_rmse %.2f mm", rmse * 1e3);
  std::printf("\n");
  return kExitOk;
}

// ---- track -------------------------------------------------------------------

struct TrackArgs {
  std::string markers;
  std::string rig;
  std::string out;
  std::string raw_out;
  double min_cutoff = 0.0;
  double beta = -1.0;
};

int run_track(const TrackArgs& a) {
  mra_marker_log* log = nullptr;
  mra_rig* rig = nullptr;
  mra_status s = mra_marker_log_load(a.markers.c_str(), &log);
  if (s != MRA_OK) return fail(s);
  s = mra_rig_load(a.rig.c_str(), &rig);
  if (s != MRA_OK) {
    mra_marker_log_free(log);
    return fail(s);
  }
  mra_filter_params params;
  mra_filter_params_default(&params);
  if (a.min_cutoff > 0.0) params.min_cutoff = a.min_cutoff;
  if (a.beta >= 0.0) params.beta = a.beta;
  PoseStream raw;
  PoseStream filtered;
  mra_track_summary summary;
  s = mra_track(log, rig, &params, &raw.handle, &filtered.handle, &summary);
  mra_marker_log_free(log);
  mra_rig_free(rig);
  if (s != MRA_OK) return fail(s);
  if (!a.out.empty() && (s = mra_pose_stream_save(filtered.handle, a.out.c_str())) != MRA_OK) return fail(s);
  if (!a.raw_out.empty() && (s = mra_pose_stream_save(raw.handle, a.raw_out.c_str())) != MRA_OK) return fail(s);
  std::printf("frames %zu lost %zu marker_loss %.2f%% jitter raw %.2f%% filtered %.2f%% fps %.1f\n", summary.frames,
              summary.frames_lost, summary.marker_loss_rate * 100.0, summary.raw_jitter_rate * 100.0,
              summary.filtered_jitter_rate * 100.0, summary.throughput_fps);
  return kExitOk;
}

// ---- register ----------------------------------------------------------------

struct RegisterArgs {
  std::string head_template;
  std::string scene;
  std::string roi;
  std::string out;
  double voxel = 0.0;
  std::optional<std::uint64_t> seed;
};

int run_register(const RegisterArgs& a) {
  Cloud head;
  Cloud scene;
  mra_roi roi;
  mra_status s = mra_cloud_load(a.head_template.c_str(), &head.handle);
  if (s != MRA_OK) return fail(s);
  if ((s = mra_cloud_load(a.scene.c_str(), &scene.handle)) != MRA_OK) return fail(s);
  if ((s = mra_roi_load(a.roi.c_str(), &roi)) != MRA_OK) return fail(s);
  mra_locate_options options;
  mra_locate_options_default(&options);
  if (a.voxel > 0.0) options.voxel = a.voxel;
  if (auto seed = resolve_seed(a.seed)) options.seed = *seed;
  mra_head_result r;
  if ((s = mra_locate_head(head.handle, scene.handle, &roi, &options, &r)) != MRA_OK) return fail(s);
  if (!a.out.empty() && (s = mra_transform_save(&r.refined, a.out.c_str())) != MRA_OK) return fail(s);
  print_transform("scene_from_template", r.refined);
  std::printf(" fitness %.3f rmse %.2f mm converged %d roi_points %zu\n", r.fitness, r.inlier_rmse * 1e3, r.converged,
              r.roi_points);
  return r.converged ? kExitOk : kExitDomain;
}

// ---- guide -------------------------------------------------------------------

struct GuideArgs {
  std::string expert;
  std::string checkpoints;
  std::string wrist;
  std::string anchor;
  std::string out;
};

int run_guide(const GuideArgs& a) {
  mra_guidance* g = nullptr;
  mra_status s = mra_guidance_load(a.expert.c_str(), a.checkpoints.c_str(), &g);
  if (s != MRA_OK) return fail(s);
  struct Release {
    mra_guidance* g;
    ~Release() { mra_guidance_free(g); }
  } release{g};

  if (!a.anchor.empty()) {
    mra_transform anchor;
    if ((s = mra_transform_load(a.anchor.c_str(), &anchor)) != MRA_OK) return fail(s);
    if ((s = mra_guidance_set_anchor(g, &anchor)) != MRA_OK) return fail(s);
  }
  PoseStream wrist;
  if ((s = mra_pose_stream_load(a.wrist.c_str(), &wrist.handle)) != MRA_OK) return fail(s);

  std::FILE* out = nullptr;
  if (!a.out.empty()) {
    out = std::fopen(a.out.c_str(), "wb");
    if (!out) {
      std::fprintf(stderr, "error: Io: cannot open '%s' for writing\n", a.out.c_str());
      return kExitIo;
    }
  }
  mra_guidance_phase phase = MRA_PHASE_IDLE;
  std::size_t prompts = 0;
  std::size_t passed = 0;
  const std::size_t n = mra_pose_stream_size(wrist.handle);
  for (std::size_t i = 0; i < n; ++i) {
    double t = 0.0;
    mra_transform pose;
    mra_guidance_event event = MRA_EVENT_NONE;
    std::size_t index = 0;
    s = mra_pose_stream_get(wrist.handle, i, &t, &pose);
    if (s == MRA_OK) s = mra_guidance_step(g, &pose, &phase, &event, &index);
    if (s != MRA_OK) {
      if (out) std::fclose(out);
      return fail(s);
    }
    prompts += event == MRA_EVENT_CORRECTIVE_PROMPT;
    passed += event == MRA_EVENT_CHECKPOINT_PASSED;
    if (out && event != MRA_EVENT_NONE) {
      std::fprintf(out, "{\"frame\":%zu,\"t\":%.17g,\"event\":\"%s\",\"phase\":\"%s\",\"playback_index\":%zu}\n", i, t,
                   mra_guidance_event_string(event), mra_guidance_phase_string(phase), index);
    }
  }
  if (out && std::fclose(out) != 0) {
    std::fprintf(stderr, "error: Io: failed writing '%s'\n", a.out.c_str());
    return kExitIo;
  }
  std::printf("steps %zu final phase %s checkpoints passed %zu corrective prompts %zu\n", n,
              mra_guidance_phase_string(phase), passed, prompts);
  return kExitOk;
}

// ---- harness -----------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t frames = 0;
};

int run_simulate(const SimulateArgs& a) {
  const auto seed = resolve_seed(a.seed);
  const mra_status s = mra_simulate(a.scenario.c_str(), seed ? &*seed : nullptr, a.frames, a.out.c_str());
  if (s != MRA_OK) return fail(s);
  std::printf("%s written to %s\n", a.scenario.c_str(), a.out.c_str());
  return kExitOk;
}

int run_metrics(const std::string& run_dir) {
  char summary[512];
  const mra_status s = mra_metrics(run_dir.c_str(), summary, sizeof summary);
  if (s != MRA_OK) return fail(s);
  std::printf("%s\n", summary);
  return kExitOk;
}

struct ReportArgs {
  std::string out;
  std::size_t trials = 20;
  std::optional<std::uint64_t> seed;
  std::size_t frames = 0;
  bool with_fps = false;
};

int run_report(const ReportArgs& a) {
  const auto seed = resolve_seed(a.seed);
  char summary[512];
  const mra_status s = mra_report(a.trials, seed ? &*seed : nullptr, a.frames, a.out.c_str(), a.with_fps, summary,
                                  sizeof summary);
  if (s != MRA_OK) return fail(s);
  std::printf("%s\n", summary);
  return kExitOk;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < mra_preset_count(); ++i) names.emplace_back(mra_preset_name(i));
  return names;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mranchor: calibration, marker tracking, head localization and guidance"};
  app.set_version_flag("--version", mra_version());
  app.require_subcommand(1);

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Solve headset-from-camera from paired pose streams");
  calibrate->add_option("--headset", cal.headset, "Controller poses in the headset frame (JSONL)")->required();
  calibrate->add_option("--marker", cal.marker, "Marker poses in the camera frame (JSONL)")->required();
  calibrate->add_option("--out", cal.out, "Write the transform here (JSON)");
  auto* vh = calibrate->add_option("--validation-headset", cal.validation_headset, "Headset stream for RMSE");
  auto* vc = calibrate->add_option("--validation-camera", cal.validation_camera, "Camera stream for RMSE");
  vh->needs(vc);
  vc->needs(vh);
  calibrate->add_flag("--all-pairs", cal.all_pairs, "Pair every sample with every other");
  calibrate->add_option("--min-rotation", cal.min_rotation_deg, "Minimum relative rotation per pair, degrees")
      ->check(CLI::PositiveNumber);

  TrackArgs trk;
  auto* track = app.add_subcommand("track", "Fuse marker observations into filtered model poses");
  track->add_option("--markers", trk.markers, "Marker observation log (JSONL)")->required();
  track->add_option("--rig", trk.rig, "Marker rig (JSON)")->required();
  track->add_option("--out", trk.out, "Filtered poses (JSONL)");
  track->add_option("--raw-out", trk.raw_out, "Unfiltered poses (JSONL)");
  track->add_option("--min-cutoff", trk.min_cutoff, "One-euro minimum cutoff, Hz")->check(CLI::PositiveNumber);
  track->add_option("--beta", trk.beta, "One-euro speed coefficient")->check(CLI::NonNegativeNumber);

  RegisterArgs reg;
  std::uint64_t reg_seed = 0;
  auto* registration = app.add_subcommand("register", "Locate the head template inside a scene ROI");
  registration->add_option("--template", reg.head_template, "Head template (PLY)")->required();
  registration->add_option("--scene", reg.scene, "Scene cloud in the camera frame (PLY)")->required();
  registration->add_option("--roi", reg.roi, "Region of interest (JSON)")->required();
  registration->add_option("--out", reg.out, "Write scene-from-template here (JSON)");
  registration->add_option("--voxel", reg.voxel, "Coarse voxel size, meters")->check(CLI::PositiveNumber);
  auto* reg_seed_opt = registration->add_option("--seed", reg_seed, "Seed for the coarse stage");

  GuideArgs gd;
  auto* guide = app.add_subcommand("guide", "Replay wrist poses through the guidance state machine");
  guide->add_option("--expert", gd.expert, "Expert hand trajectory in the anchor frame (JSONL)")->required();
  guide->add_option("--checkpoints", gd.checkpoints, "Checkpoints (JSON)")->required();
  guide->add_option("--wrist", gd.wrist, "Trainee wrist poses (JSONL)")->required();
  guide->add_option("--anchor", gd.anchor, "Anchor frame in wrist coordinates (JSON)");
  guide->add_option("--out", gd.out, "Events (JSONL)");

  SimulateArgs sim;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Write a seeded scenario run directory");
  simulate->add_option("--scenario", sim.scenario, "Scenario preset")->required()->check(CLI::IsMember(preset_names()));
  simulate->add_option("--out", sim.out, "Run directory")->required();
  auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "Scenario seed (overrides MRANCHOR_SEED)");
  simulate->add_option("--frames", sim.frames, "Frame count (default: preset)")->check(CLI::PositiveNumber);

  std::string run_dir;
  auto* metrics = app.add_subcommand("metrics", "Evaluate a run directory and write metrics.json");
  metrics->add_option("run", run_dir, "Run directory written by simulate")->required();

  ReportArgs rep;
  std::uint64_t rep_seed = 0;
  auto* report = app.add_subcommand("report", "Multi-trial tracking table over the table1 presets");
  report->add_option("--out", rep.out, "Report path (JSON; a .txt table is written alongside)")->required();
  report->add_option("--trials", rep.trials, "Trials per setup")->check(CLI::PositiveNumber);
  auto* rep_seed_opt = report->add_option("--seed", rep_seed, "Base seed (overrides MRANCHOR_SEED)");
  report->add_option("--frames", rep.frames, "Frames per trial (default: preset)")->check(CLI::PositiveNumber);
  report->add_flag("--with-fps", rep.with_fps, "Include throughput columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const std::string first = argc > 1 ? argv[1] : "";
    if (!first.empty() && first[0] != '-' && !app.get_subcommand_no_throw(first)) {
      std::fprintf(stderr, "error: unknown subcommand '%s'\n\n%s", first.c_str(), app.help().c_str());
    } else {
      std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    }
    return kExitIo;
  }

  try {
    if (*calibrate) return run_calibrate(cal);
    if (*track) return run_track(trk);
    if (*registration) {
      if (*reg_seed_opt) reg.seed = reg_seed;
      return run_register(reg);
    }
    if (*guide) return run_guide(gd);
    if (*simulate) {
      if (*sim_seed_opt) sim.seed = sim_seed;
      return run_simulate(sim);
    }
    if (*metrics) return run_metrics(run_dir);
    if (*report) {
      if (*rep_seed_opt) rep.seed = rep_seed;
      return run_report(rep);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return kExitIo;
  }
  std::fprintf(stderr, "%s", app.help().c_str());
  return kExitIo;
}
