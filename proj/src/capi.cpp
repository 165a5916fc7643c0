#include "mranchor/mranchor.h"

#include <cstring>
#include <new>
#include <string>

#include "mranchor/error.hpp"
#include "mranchor/hand_eye.hpp"
#include "mranchor/harness.hpp"
#include "mranchor/io.hpp"

struct mra_pose_stream {
  std::vector<mranchor::TimedPose> poses;
};
struct mra_marker_log {
  std::vector<mranchor::MarkerObservation> log;
};
struct mra_rig {
  mranchor::MarkerRig rig;
};
struct mra_cloud {
  mranchor::PointCloud cloud;
};
struct mra_guidance {
  mranchor::ExpertTrajectory trajectory;
  mranchor::RigidTransform anchor;
  mranchor::GuidanceState state;
};

namespace {

using namespace mranchor;

thread_local std::string g_last_error;

mra_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return MRA_INVALID_ARGUMENT;
    case ErrorCode::NonMonotonicTimestamps: return MRA_NON_MONOTONIC_TIMESTAMPS;
    case ErrorCode::StreamMismatch: return MRA_STREAM_MISMATCH;
    case ErrorCode::InsufficientMotion: return MRA_INSUFFICIENT_MOTION;
    case ErrorCode::DegenerateMotion: return MRA_DEGENERATE_MOTION;
    case ErrorCode::InsufficientPairs: return MRA_INSUFFICIENT_PAIRS;
    case ErrorCode::InvalidDepth: return MRA_INVALID_DEPTH;
    case ErrorCode::DegenerateCorners: return MRA_DEGENERATE_CORNERS;
    case ErrorCode::TooFewCorners: return MRA_TOO_FEW_CORNERS;
    case ErrorCode::NoKnownMarkers: return MRA_NO_KNOWN_MARKERS;
    case ErrorCode::EmptyTrack: return MRA_EMPTY_TRACK;
    case ErrorCode::TooSparse: return MRA_TOO_SPARSE;
    case ErrorCode::NoCorrespondences: return MRA_NO_CORRESPONDENCES;
    case ErrorCode::EmptyROI: return MRA_EMPTY_ROI;
    case ErrorCode::NotConverged: return MRA_NOT_CONVERGED;
    case ErrorCode::FrameMismatch: return MRA_FRAME_MISMATCH;
    case ErrorCode::Io: return MRA_IO;
    case ErrorCode::Format: return MRA_FORMAT;
  }
  return MRA_INTERNAL;
}

// Runs `f`, translating exceptions into a status and the thread's message.
template <class F>
mra_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return MRA_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return MRA_INTERNAL;
}

void require(bool condition, const char* message) {
  if (!condition) throw Error(ErrorCode::InvalidArgument, message);
}

RigidTransform from_c(const mra_transform& t) {
  const Eigen::Vector4d q(t.q[0], t.q[1], t.q[2], t.q[3]);
  const Eigen::Vector3d p(t.p[0], t.p[1], t.p[2]);
  if (!q.allFinite() || !p.allFinite() || q.norm() < 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "transform has a non-finite or zero quaternion");
  }
  return {Eigen::Quaterniond(q[0], q[1], q[2], q[3]), p};
}

mra_transform to_c(const RigidTransform& t) {
  mra_transform out;
  out.q[0] = t.rotation().w();
  out.q[1] = t.rotation().x();
  out.q[2] = t.rotation().y();
  out.q[3] = t.rotation().z();
  for (int i = 0; i < 3; ++i) out.p[i] = t.translation()[i];
  return out;
}

void copy_summary(const std::string& text, char* buffer, std::size_t size) {
  if (!buffer || size == 0) return;
  const std::size_t n = std::min(text.size(), size - 1);
  std::memcpy(buffer, text.data(), n);
  buffer[n] = '\0';
}

mra_guidance_phase to_c(GuidancePhase p) { return static_cast<mra_guidance_phase>(static_cast<int>(p)); }
mra_guidance_event to_c(GuidanceEvent e) { return static_cast<mra_guidance_event>(static_cast<int>(e)); }

}  // namespace

extern "C" {

const char* mra_status_string(mra_status status) {
  switch (status) {
    case MRA_OK: return "OK";
    case MRA_INTERNAL: return "Internal";
    default: break;
  }
  if (status > MRA_OK && status < MRA_INTERNAL) {
    return to_string(static_cast<ErrorCode>(static_cast<int>(status) - 1));
  }
  return "Unknown";
}

const char* mra_last_error(void) { return g_last_error.c_str(); }

int mra_status_is_io(mra_status status) { return status == MRA_IO || status == MRA_FORMAT; }

const char* mra_version(void) { return "0.1.0"; }

// ---- pose streams -----------------------------------------------------------

mra_status mra_pose_stream_load(const char* path, mra_pose_stream** out) {
  return guarded([&] {
    require(path && out, "mra_pose_stream_load: null argument");
    *out = new mra_pose_stream{io::read_pose_stream(path)};
  });
}

mra_status mra_pose_stream_save(const mra_pose_stream* stream, const char* path) {
  return guarded([&] {
    require(stream && path, "mra_pose_stream_save: null argument");
    io::write_pose_stream(path, stream->poses);
  });
}

size_t mra_pose_stream_size(const mra_pose_stream* stream) { return stream ? stream->poses.size() : 0; }

mra_status mra_pose_stream_get(const mra_pose_stream* stream, size_t index, double* timestamp, mra_transform* pose) {
  return guarded([&] {
    require(stream, "mra_pose_stream_get: null stream");
    require(index < stream->poses.size(), "mra_pose_stream_get: index out of range");
    if (timestamp) *timestamp = stream->poses[index].timestamp;
    if (pose) *pose = to_c(stream->poses[index].pose);
  });
}

void mra_pose_stream_free(mra_pose_stream* stream) { delete stream; }

mra_status mra_transform_load(const char* path, mra_transform* out) {
  return guarded([&] {
    require(path && out, "mra_transform_load: null argument");
    *out = to_c(io::read_transform(path));
  });
}

mra_status mra_transform_save(const mra_transform* t, const char* path) {
  return guarded([&] {
    require(t && path, "mra_transform_save: null argument");
    io::write_transform(path, from_c(*t));
  });
}

// ---- calibration -------------------------------------------------------------

void mra_calibration_options_default(mra_calibration_options* options) {
  if (!options) return;
  const PairingOptions d;
  options->min_rotation_deg = rad2deg(d.min_rotation);
  options->sync_tolerance = d.sync_tolerance;
  options->angle_consistency_deg = rad2deg(d.angle_consistency);
  options->all_pairs = d.policy == PairingPolicy::AllPairs;
}

mra_status mra_calibrate(const mra_pose_stream* headset, const mra_pose_stream* marker,
                         const mra_calibration_options* options, mra_calibration_result* out) {
  return guarded([&] {
    require(headset && marker && out, "mra_calibrate: null argument");
    mra_calibration_options o;
    mra_calibration_options_default(&o);
    if (options) o = *options;
    PairingOptions p;
    p.min_rotation = deg2rad(o.min_rotation_deg);
    p.sync_tolerance = o.sync_tolerance;
    p.angle_consistency = deg2rad(o.angle_consistency_deg);
    p.policy = o.all_pairs ? PairingPolicy::AllPairs : PairingPolicy::Consecutive;
    const auto pairs = build_motion_pairs(headset->poses, marker->poses, p);
    const CalibrationResult r = solve_hand_eye(pairs);
    out->x = to_c(r.x);
    out->rotation_residual = r.rotation_residual;
    out->translation_residual = r.translation_residual;
    out->pairs_used = r.pairs_used;
  });
}

mra_status mra_corrected_rmse(const mra_transform* x, const mra_pose_stream* camera, const mra_pose_stream* headset,
                              double sync_tolerance, double* rmse) {
  return guarded([&] {
    require(x && camera && headset && rmse, "mra_corrected_rmse: null argument");
    *rmse = corrected_trajectory_rmse(from_c(*x), camera->poses, headset->poses, sync_tolerance);
  });
}

// ---- tracking ------------------------------------------------------------------

mra_status mra_marker_log_load(const char* path, mra_marker_log** out) {
  return guarded([&] {
    require(path && out, "mra_marker_log_load: null argument");
    *out = new mra_marker_log{io::read_marker_log(path)};
  });
}

size_t mra_marker_log_size(const mra_marker_log* log) { return log ? log->log.size() : 0; }

void mra_marker_log_free(mra_marker_log* log) { delete log; }

mra_status mra_rig_load(const char* path, mra_rig** out) {
  return guarded([&] {
    require(path && out, "mra_rig_load: null argument");
    *out = new mra_rig{io::read_rig(path)};
  });
}

size_t mra_rig_marker_count(const mra_rig* rig) { return rig ? rig->rig.offsets.size() : 0; }

void mra_rig_free(mra_rig* rig) { delete rig; }

void mra_filter_params_default(mra_filter_params* params) {
  if (!params) return;
  const OneEuroParams d;
  params->min_cutoff = d.min_cutoff;
  params->beta = d.beta;
  params->d_cutoff = d.d_cutoff;
}

mra_status mra_track(const mra_marker_log* log, const mra_rig* rig, const mra_filter_params* params,
                     mra_pose_stream** raw, mra_pose_stream** filtered, mra_track_summary* summary) {
  return guarded([&] {
    require(log && rig, "mra_track: null argument");
    OneEuroParams p;
    if (params) {
      p.min_cutoff = params->min_cutoff;
      p.beta = params->beta;
      p.d_cutoff = params->d_cutoff;
    }
    p.validate();
    const auto frames = group_frames(log->log);
    const TrackingOutput t = track_markers(frames, rig->rig, p);
    if (summary) {
      std::vector<std::optional<RigidTransform>> raw_track;
      std::vector<std::optional<RigidTransform>> filtered_track;
      for (const auto& f : t.raw) raw_track.push_back(f ? std::optional(f->pose) : std::nullopt);
      for (const auto& f : t.filtered) filtered_track.push_back(f ? std::optional(f->pose) : std::nullopt);
      summary->frames = t.raw.size();
      summary->frames_lost = 0;
      summary->marker_loss_rate = 0.0;
      summary->raw_jitter_rate = 0.0;
      summary->filtered_jitter_rate = 0.0;
      if (raw_track.size() >= 2) {
        const JitterStats rs = jitter_stats(raw_track);
        const JitterStats fs = jitter_stats(filtered_track);
        summary->frames_lost = rs.frames_lost;
        summary->marker_loss_rate = rs.marker_loss_rate;
        summary->raw_jitter_rate = rs.pose_jitter_rate;
        summary->filtered_jitter_rate = fs.pose_jitter_rate;
      }
      double total = 0.0;
      for (double s : t.frame_seconds) total += s;
      summary->throughput_fps = total > 0.0 ? static_cast<double>(t.frame_seconds.size()) / total : 0.0;
    }
    auto raw_stream = std::make_unique<mra_pose_stream>(mra_pose_stream{to_pose_stream(t.raw)});
    auto filtered_stream = std::make_unique<mra_pose_stream>(mra_pose_stream{to_pose_stream(t.filtered)});
    if (raw) *raw = raw_stream.release();
    if (filtered) *filtered = filtered_stream.release();
  });
}

// ---- head localization -----------------------------------------------------------

mra_status mra_cloud_load(const char* path, mra_cloud** out) {
  return guarded([&] {
    require(path && out, "mra_cloud_load: null argument");
    *out = new mra_cloud{io::read_ply(path)};
  });
}

mra_status mra_cloud_save(const mra_cloud* cloud, const char* path, int binary) {
  return guarded([&] {
    require(cloud && path, "mra_cloud_save: null argument");
    io::write_ply(path, cloud->cloud, binary != 0);
  });
}

size_t mra_cloud_size(const mra_cloud* cloud) { return cloud ? cloud->cloud.size() : 0; }

int mra_cloud_has_normals(const mra_cloud* cloud) { return cloud && cloud->cloud.has_normals(); }

void mra_cloud_free(mra_cloud* cloud) { delete cloud; }

mra_status mra_roi_load(const char* path, mra_roi* out) {
  return guarded([&] {
    require(path && out, "mra_roi_load: null argument");
    const RegionOfInterest roi = io::read_roi(path);
    out->center = to_c(roi.center);
    for (int i = 0; i < 3; ++i) out->half_extents[i] = roi.half_extents[i];
  });
}

void mra_locate_options_default(mra_locate_options* options) {
  if (!options) return;
  const LocateParams d;
  options->voxel = d.voxel;
  options->refine_voxel = d.refine_voxel;
  options->fitness_floor = d.fitness_floor;
  options->seed = d.seed;
}

mra_status mra_locate_head(const mra_cloud* head_template, const mra_cloud* scene, const mra_roi* roi,
                           const mra_locate_options* options, mra_head_result* out) {
  return guarded([&] {
    require(head_template && scene && roi && out, "mra_locate_head: null argument");
    LocateParams p;
    if (options) {
      p.voxel = options->voxel;
      p.refine_voxel = options->refine_voxel;
      p.fitness_floor = options->fitness_floor;
      p.seed = options->seed;
    }
    RegionOfInterest r;
    r.center = from_c(roi->center);
    r.half_extents = Eigen::Vector3d(roi->half_extents[0], roi->half_extents[1], roi->half_extents[2]);
    const HeadLocalization h = locate_head(head_template->cloud, scene->cloud, r, p);
    out->coarse = to_c(h.coarse.transform);
    out->refined = to_c(h.refined.transform);
    out->coarse_fitness = h.coarse.fitness;
    out->fitness = h.refined.fitness;
    out->inlier_rmse = h.refined.inlier_rmse;
    out->iterations = h.refined.iterations;
    out->converged = h.refined.converged;
    out->roi_points = h.roi_points;
  });
}

// ---- guidance ------------------------------------------------------------------------

mra_status mra_guidance_load(const char* expert_path, const char* checkpoints_path, mra_guidance** out) {
  return guarded([&] {
    require(expert_path && checkpoints_path && out, "mra_guidance_load: null argument");
    auto g = std::make_unique<mra_guidance>();
    g->trajectory.samples = io::read_pose_stream(expert_path);
    g->trajectory.checkpoints = io::read_checkpoints(checkpoints_path);
    if (g->trajectory.samples.empty()) throw Error(ErrorCode::Format, "expert trajectory has no samples");
    g->trajectory.validate();
    *out = g.release();
  });
}

mra_status mra_guidance_set_anchor(mra_guidance* guidance, const mra_transform* anchor) {
  return guarded([&] {
    require(guidance && anchor, "mra_guidance_set_anchor: null argument");
    guidance->anchor = from_c(*anchor);
  });
}

mra_status mra_guidance_step(mra_guidance* guidance, const mra_transform* wrist, mra_guidance_phase* phase,
                             mra_guidance_event* event, size_t* playback_index) {
  return guarded([&] {
    require(guidance && wrist, "mra_guidance_step: null argument");
    const Eigen::Vector4d q(wrist->q[0], wrist->q[1], wrist->q[2], wrist->q[3]);
    const Eigen::Vector3d p(wrist->p[0], wrist->p[1], wrist->p[2]);
    if (!q.allFinite() || !p.allFinite()) throw Error(ErrorCode::FrameMismatch, "non-finite wrist pose");
    const auto& samples = guidance->trajectory.samples;
    const std::size_t idx = std::min(guidance->state.playback_index, samples.size() - 1);
    const GuidanceStep step =
        guidance_step(guidance->state, guidance->trajectory, from_c(*wrist), guidance->anchor * samples[idx].pose);
    guidance->state = step.state;
    if (phase) *phase = to_c(step.state.phase);
    if (event) *event = to_c(step.event);
    if (playback_index) *playback_index = step.state.playback_index;
  });
}

const char* mra_guidance_phase_string(mra_guidance_phase phase) {
  return to_string(static_cast<GuidancePhase>(static_cast<int>(phase)));
}

const char* mra_guidance_event_string(mra_guidance_event event) {
  return to_string(static_cast<GuidanceEvent>(static_cast<int>(event)));
}

void mra_guidance_free(mra_guidance* guidance) { delete guidance; }

// ---- harness ---------------------------------------------------------------------------

size_t mra_preset_count(void) { return preset_names().size(); }

const char* mra_preset_name(size_t index) {
  static const std::vector<std::string> names = preset_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

mra_status mra_simulate(const char* scenario, const uint64_t* seed, size_t frames, const char* out_dir) {
  return guarded([&] {
    require(scenario && out_dir, "mra_simulate: null argument");
    ScenarioConfig config = scenario_preset(scenario);
    if (seed) config.seed = *seed;
    if (frames > 0) config.frame_count = frames;
    harness::write_run(config, out_dir);
  });
}

mra_status mra_metrics(const char* run_dir, char* summary, size_t summary_size) {
  return guarded([&] {
    require(run_dir, "mra_metrics: null run directory");
    copy_summary(harness::evaluate_run(run_dir), summary, summary_size);
  });
}

mra_status mra_report(size_t trials, const uint64_t* seed, size_t frames, const char* out_path, int with_fps,
                      char* summary, size_t summary_size) {
  return guarded([&] {
    require(out_path, "mra_report: null output path");
    harness::ReportOptions o;
    o.trials = trials;
    if (seed) o.seed = *seed;
    o.frames = frames;
    o.with_fps = with_fps != 0;
    copy_summary(harness::write_report(out_path, o), summary, summary_size);
  });
}

}  // extern "C"
