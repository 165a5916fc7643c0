#include "mranchor/guidance.hpp"

#include "mranchor/error.hpp"

namespace mranchor {

RigidTransform anchor_coarse(const RigidTransform& g, const RigidTransform& t_hc, const RigidTransform& t_cf,
                             const RigidTransform& t_fm) {
  return t_hc * t_cf * t_fm * g;
}

GuidanceAnchor refine_anchor(const GuidanceAnchor& anchor, const RegistrationResult& head,
                             const RigidTransform& model_pose) {
  if (!head.converged) throw Error(ErrorCode::NotConverged, "refine_anchor: head localization did not converge");
  const RigidTransform hand_from_head = anchor.nominal_head.inverse() * anchor.g_local;
  GuidanceAnchor out = anchor;
  out.g_refined = model_pose.inverse() * head.transform * hand_from_head;
  return out;
}

void ExpertTrajectory::validate() const {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].timestamp > samples[i - 1].timestamp)) {
      throw Error(ErrorCode::NonMonotonicTimestamps, "expert trajectory: timestamps not increasing");
    }
  }
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i].sample_index >= samples.size()) {
      throw Error(ErrorCode::InvalidArgument, "expert trajectory: checkpoint index out of range");
    }
    if (i > 0 && checkpoints[i].sample_index <= checkpoints[i - 1].sample_index) {
      throw Error(ErrorCode::InvalidArgument, "expert trajectory: checkpoint indices must strictly increase");
    }
    if (!(checkpoints[i].threshold >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "expert trajectory: negative checkpoint threshold");
    }
  }
}

const char* to_string(GuidancePhase phase) noexcept {
  switch (phase) {
    case GuidancePhase::Idle: return "Idle";
    case GuidancePhase::Active: return "Active";
    case GuidancePhase::Paused: return "Paused";
    case GuidancePhase::Completed: return "Completed";
  }
  return "Unknown";
}

const char* to_string(GuidanceEvent event) noexcept {
  switch (event) {
    case GuidanceEvent::None: return "None";
    case GuidanceEvent::AnimationStarted: return "AnimationStarted";
    case GuidanceEvent::CheckpointPassed: return "CheckpointPassed";
    case GuidanceEvent::CorrectivePrompt: return "CorrectivePrompt";
    case GuidanceEvent::Resumed: return "Resumed";
    case GuidanceEvent::Completed: return "Completed";
  }
  return "Unknown";
}

GuidanceStep guidance_step(const GuidanceState& state, const ExpertTrajectory& trajectory,
                           const RigidTransform& wrist, const RigidTransform& expert_now,
                           const GuidanceConfig& config) {
  if (!wrist.is_finite() || !expert_now.is_finite()) {
    throw Error(ErrorCode::FrameMismatch, "guidance_step: non-finite wrist or expert pose");
  }
  const double deviation = (wrist.translation() - expert_now.translation()).norm();
  GuidanceStep out{state, GuidanceEvent::None};
  auto& s = out.state;

  switch (state.phase) {
    case GuidancePhase::Idle:
      if (deviation < config.trigger_distance) {
        s.phase = GuidancePhase::Active;
        out.event = GuidanceEvent::AnimationStarted;
      }
      break;

    case GuidancePhase::Active: {
      // Completion happens on the step after the final sample was played.
      if (s.playback_index >= trajectory.samples.size()) {
        s.phase = GuidancePhase::Completed;
        out.event = GuidanceEvent::Completed;
        break;
      }
      const bool at_checkpoint = s.next_checkpoint < trajectory.checkpoints.size() &&
                                 trajectory.checkpoints[s.next_checkpoint].sample_index == s.playback_index;
      if (at_checkpoint) {
        if (deviation > trajectory.checkpoints[s.next_checkpoint].threshold) {
          s.phase = GuidancePhase::Paused;
          out.event = GuidanceEvent::CorrectivePrompt;
          break;
        }
        ++s.next_checkpoint;
        out.event = GuidanceEvent::CheckpointPassed;
      }
      ++s.playback_index;
      break;
    }

    case GuidancePhase::Paused:
      // Resume without advancing; the checkpoint is re-tested on the next step.
      if (deviation <= trajectory.checkpoints[s.next_checkpoint].threshold) {
        s.phase = GuidancePhase::Active;
        out.event = GuidanceEvent::Resumed;
      }
      break;

    case GuidancePhase::Completed:
      break;
  }
  return out;
}

}  // namespace mranchor
