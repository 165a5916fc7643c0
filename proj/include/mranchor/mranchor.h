#ifndef MRANCHOR_H
#define MRANCHOR_H

/* C interface to the mranchor library. Every call returns an mra_status;
 * on failure mra_last_error() holds a message for the calling thread.
 * Handles are opaque, owned by the caller and released with their _free
 * function (NULL is accepted). A handle may move between threads but must
 * not be used from two threads at once. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MRA_API __declspec(dllexport)
#else
#define MRA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mra_status {
  MRA_OK = 0,
  MRA_INVALID_ARGUMENT,
  MRA_NON_MONOTONIC_TIMESTAMPS,
  MRA_STREAM_MISMATCH,
  MRA_INSUFFICIENT_MOTION,
  MRA_DEGENERATE_MOTION,
  MRA_INSUFFICIENT_PAIRS,
  MRA_INVALID_DEPTH,
  MRA_DEGENERATE_CORNERS,
  MRA_TOO_FEW_CORNERS,
  MRA_NO_KNOWN_MARKERS,
  MRA_EMPTY_TRACK,
  MRA_TOO_SPARSE,
  MRA_NO_CORRESPONDENCES,
  MRA_EMPTY_ROI,
  MRA_NOT_CONVERGED,
  MRA_FRAME_MISMATCH,
  MRA_IO,
  MRA_FORMAT,
  MRA_INTERNAL
} mra_status;

MRA_API const char* mra_status_string(mra_status status);
MRA_API const char* mra_last_error(void);
/* 1 for MRA_IO and MRA_FORMAT. */
MRA_API int mra_status_is_io(mra_status status);
MRA_API const char* mra_version(void);

/* Rotation as a unit quaternion (w, x, y, z), translation in meters. */
typedef struct mra_transform {
  double q[4];
  double p[3];
} mra_transform;

/* ---- pose streams ------------------------------------------------------ */

typedef struct mra_pose_stream mra_pose_stream;

MRA_API mra_status mra_pose_stream_load(const char* path, mra_pose_stream** out);
MRA_API mra_status mra_pose_stream_save(const mra_pose_stream* stream, const char* path);
MRA_API size_t mra_pose_stream_size(const mra_pose_stream* stream);
MRA_API mra_status mra_pose_stream_get(const mra_pose_stream* stream, size_t index, double* timestamp,
                                       mra_transform* pose);
MRA_API void mra_pose_stream_free(mra_pose_stream* stream);

MRA_API mra_status mra_transform_load(const char* path, mra_transform* out);
MRA_API mra_status mra_transform_save(const mra_transform* t, const char* path);

/* ---- hand-eye calibration ---------------------------------------------- */

typedef struct mra_calibration_options {
  double min_rotation_deg;    /* default 5 */
  double sync_tolerance;      /* seconds, default 0.005 */
  double angle_consistency_deg; /* default 3 */
  int all_pairs;              /* 0: consecutive samples, 1: every sample pair */
} mra_calibration_options;

typedef struct mra_calibration_result {
  mra_transform x; /* headset-from-camera */
  double rotation_residual;    /* radians, RMS over pairs */
  double translation_residual; /* meters, RMS over pairs */
  size_t pairs_used;
} mra_calibration_result;

MRA_API void mra_calibration_options_default(mra_calibration_options* options);
/* `options` may be NULL for defaults. */
MRA_API mra_status mra_calibrate(const mra_pose_stream* headset, const mra_pose_stream* marker,
                                 const mra_calibration_options* options, mra_calibration_result* out);
/* RMS distance between x-mapped camera positions and headset positions. */
MRA_API mra_status mra_corrected_rmse(const mra_transform* x, const mra_pose_stream* camera,
                                      const mra_pose_stream* headset, double sync_tolerance, double* rmse);

/* ---- marker tracking --------------------------------------------------- */

typedef struct mra_marker_log mra_marker_log;
typedef struct mra_rig mra_rig;

MRA_API mra_status mra_marker_log_load(const char* path, mra_marker_log** out);
MRA_API size_t mra_marker_log_size(const mra_marker_log* log);
MRA_API void mra_marker_log_free(mra_marker_log* log);
MRA_API mra_status mra_rig_load(const char* path, mra_rig** out);
MRA_API size_t mra_rig_marker_count(const mra_rig* rig);
MRA_API void mra_rig_free(mra_rig* rig);

typedef struct mra_filter_params {
  double min_cutoff; /* Hz, default 1.0 */
  double beta;       /* default 0.05 */
  double d_cutoff;   /* Hz, default 1.0 */
} mra_filter_params;

typedef struct mra_track_summary {
  size_t frames;
  size_t frames_lost;
  double marker_loss_rate;
  double raw_jitter_rate;
  double filtered_jitter_rate;
  double throughput_fps;
} mra_track_summary;

MRA_API void mra_filter_params_default(mra_filter_params* params);
/* Frames are the distinct log timestamps. `raw` and `filtered` receive the
 * detected frames only; either may be NULL. */
MRA_API mra_status mra_track(const mra_marker_log* log, const mra_rig* rig, const mra_filter_params* params,
                             mra_pose_stream** raw, mra_pose_stream** filtered, mra_track_summary* summary);

/* ---- head localization ------------------------------------------------- */

typedef struct mra_cloud mra_cloud;

MRA_API mra_status mra_cloud_load(const char* path, mra_cloud** out);
MRA_API mra_status mra_cloud_save(const mra_cloud* cloud, const char* path, int binary);
MRA_API size_t mra_cloud_size(const mra_cloud* cloud);
MRA_API int mra_cloud_has_normals(const mra_cloud* cloud);
MRA_API void mra_cloud_free(mra_cloud* cloud);

typedef struct mra_roi {
  mra_transform center;
  double half_extents[3];
} mra_roi;

MRA_API mra_status mra_roi_load(const char* path, mra_roi* out);

typedef struct mra_locate_options {
  double voxel;        /* meters, default 0.005 */
  double refine_voxel; /* meters, default 0.002 */
  double fitness_floor; /* default 0.3 */
  uint64_t seed;
} mra_locate_options;

typedef struct mra_head_result {
  mra_transform coarse;  /* template -> scene */
  mra_transform refined; /* template -> scene */
  double coarse_fitness;
  double fitness;
  double inlier_rmse;
  int iterations;
  int converged;
  size_t roi_points;
} mra_head_result;

MRA_API void mra_locate_options_default(mra_locate_options* options);
MRA_API mra_status mra_locate_head(const mra_cloud* head_template, const mra_cloud* scene, const mra_roi* roi,
                                   const mra_locate_options* options, mra_head_result* out);

/* ---- guidance ---------------------------------------------------------- */

typedef enum mra_guidance_phase {
  MRA_PHASE_IDLE = 0,
  MRA_PHASE_ACTIVE,
  MRA_PHASE_PAUSED,
  MRA_PHASE_COMPLETED
} mra_guidance_phase;

typedef enum mra_guidance_event {
  MRA_EVENT_NONE = 0,
  MRA_EVENT_ANIMATION_STARTED,
  MRA_EVENT_CHECKPOINT_PASSED,
  MRA_EVENT_CORRECTIVE_PROMPT,
  MRA_EVENT_RESUMED,
  MRA_EVENT_COMPLETED
} mra_guidance_event;

typedef struct mra_guidance mra_guidance;

/* Expert samples are hand poses in the anchor frame. */
MRA_API mra_status mra_guidance_load(const char* expert_path, const char* checkpoints_path, mra_guidance** out);
/* Anchor frame -> wrist frame; identity until set. */
MRA_API mra_status mra_guidance_set_anchor(mra_guidance* guidance, const mra_transform* anchor);
MRA_API mra_status mra_guidance_step(mra_guidance* guidance, const mra_transform* wrist, mra_guidance_phase* phase,
                                     mra_guidance_event* event, size_t* playback_index);
MRA_API const char* mra_guidance_phase_string(mra_guidance_phase phase);
MRA_API const char* mra_guidance_event_string(mra_guidance_event event);
MRA_API void mra_guidance_free(mra_guidance* guidance);

/* ---- harness ----------------------------------------------------------- */

MRA_API size_t mra_preset_count(void);
MRA_API const char* mra_preset_name(size_t index);

/* Writes a scenario run directory. `seed` NULL keeps the preset seed;
 * `frames` 0 keeps the preset frame count. */
MRA_API mra_status mra_simulate(const char* scenario, const uint64_t* seed, size_t frames, const char* out_dir);

/* Evaluates a run directory written by mra_simulate and writes
 * metrics.json into it (throughput goes to throughput.json). `summary`
 * receives a one-line description and may be NULL. */
MRA_API mra_status mra_metrics(const char* run_dir, char* summary, size_t summary_size);

/* Runs `trials` seeded trials of every table1 preset and writes a JSON
 * report plus a text table next to it (`out_path` with .txt). FPS columns
 * are included only when `with_fps` is nonzero. */
MRA_API mra_status mra_report(size_t trials, const uint64_t* seed, size_t frames, const char* out_path, int with_fps,
                              char* summary, size_t summary_size);

#ifdef __cplusplus
}
#endif

#endif
