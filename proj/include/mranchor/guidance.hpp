#pragma once

// Expert-hand anchoring and the proximity-trigger / checkpoint playback
// state machine.

#include <optional>
#include <vector>

#include "mranchor/geometry.hpp"
#include "mranchor/registration.hpp"

namespace mranchor {

struct GuidanceAnchor {
  RigidTransform g_local;       // preset hand pose in the virtual model frame
  RigidTransform nominal_head;  // head pose in the model frame that g_local was authored against
  std::optional<RigidTransform> g_refined;

  const RigidTransform& active() const { return g_refined ? *g_refined : g_local; }
};

/// Headset-frame hand pose: (t_hc * t_cf * t_fm) * g.
RigidTransform anchor_coarse(const RigidTransform& g, const RigidTransform& t_hc, const RigidTransform& t_cf,
                             const RigidTransform& t_fm);

/// Re-expresses the hand relative to the observed head. `head.transform` and
/// `model_pose` must share a frame. Throws NotConverged for a failed
/// localization.
GuidanceAnchor refine_anchor(const GuidanceAnchor& anchor, const RegistrationResult& head,
                             const RigidTransform& model_pose);

struct Checkpoint {
  std::size_t sample_index = 0;
  double threshold = 0.03;  // meters
};

struct ExpertTrajectory {
  std::vector<TimedPose> samples;  // hand pose in the anchor frame
  std::vector<Checkpoint> checkpoints;

  void validate() const;
};

enum class GuidancePhase { Idle, Active, Paused, Completed };

enum class GuidanceEvent { None, AnimationStarted, CheckpointPassed, CorrectivePrompt, Resumed, Completed };

const char* to_string(GuidancePhase phase) noexcept;
const char* to_string(GuidanceEvent event) noexcept;

struct GuidanceState {
  GuidancePhase phase = GuidancePhase::Idle;
  std::size_t playback_index = 0;
  std::size_t next_checkpoint = 0;

  bool operator==(const GuidanceState&) const = default;
};

struct GuidanceConfig {
  double trigger_distance = 0.05;  // meters
};

struct GuidanceStep {
  GuidanceState state;
  GuidanceEvent event = GuidanceEvent::None;
};

/// One frame of guidance. `wrist` and `expert_now` (the expert hand at the
/// current playback sample, clamped to the last sample) must be in the same
/// frame; only their translations are compared.
GuidanceStep guidance_step(const GuidanceState& state, const ExpertTrajectory& trajectory,
                           const RigidTransform& wrist, const RigidTransform& expert_now,
                           const GuidanceConfig& config = {});

}  // namespace mranchor
