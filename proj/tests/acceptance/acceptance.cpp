#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mranchor/guidance.hpp"
#include "mranchor/hand_eye.hpp"
#include "mranchor/harness.hpp"
#include "mranchor/marker_fusion.hpp"
#include "mranchor/registration.hpp"
#include "mranchor/sim.hpp"
#include "oracles.hpp"

using namespace mranchor;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Noiseless AX = XB with well-spread rotation axes.
void closed_form_calibration() {
  std::mt19937_64 rng(1001);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> angle(deg2rad(20.0), deg2rad(60.0));
  std::uniform_real_distribution<double> shift(-0.3, 0.3);
  const RigidTransform x = RigidTransform::from_axis_angle({0.2, -0.7, 0.4}, 0.6, {0.035, -0.06, 0.02});
  std::vector<MotionPair> pairs;
  std::vector<Eigen::Vector3d> axes;
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector3d axis = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    const RigidTransform a = RigidTransform::from_axis_angle(axis, angle(rng), {shift(rng), shift(rng), shift(rng)});
    pairs.push_back({a, x.inverse() * a * x, a.rotation_angle()});
    axes.push_back(axis);
  }
  double spread = 0.0;
  for (const auto& u : axes)
    for (const auto& v : axes) spread = std::max(spread, std::acos(std::clamp(u.dot(v), -1.0, 1.0)));

  const auto t0 = Clock::now();
  const CalibrationResult r = solve_hand_eye(pairs);
  const double secs = seconds_since(t0);
  const auto e = pose_error(r.x, x);
  const bool pass = spread >= deg2rad(30.0) && e.translation_error <= 1e-6 && e.rotation_error <= 1e-6 && secs < 1.0;
  report(1, pass,
         fmt("20 noiseless pairs, axis spread %.0f deg: error %.2e m %.2e rad in %.4f s", rad2deg(spread),
             e.translation_error, e.rotation_error, secs));
}

void noisy_calibration() {
  const RigidTransform x = harness::nominal_headset_from_camera();
  int ok = 0;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    ScenarioConfig c = scenario_preset("calibration");
    c.seed = trial_seed(c.seed, i);
    const CalibrationScenario s = gen_calibration_scenario(c, x);
    const CalibrationResult r = solve_hand_eye(build_motion_pairs(s.headset_stream, s.marker_stream));
    const double corrected = corrected_trajectory_rmse(r.x, s.validation_camera, s.validation_headset);
    const double uncorrected =
        corrected_trajectory_rmse(RigidTransform::identity(), s.validation_camera, s.validation_headset);
    worst = std::max(worst, corrected);
    if (corrected <= 0.005 && corrected < uncorrected) ++ok;
  }
  report(2, ok == 10, fmt("%d/10 trials with corrected RMSE <= 5 mm and below uncorrected, worst %.2f mm", ok,
                          worst * 1e3));
}

void tracking_trends() {
  const SetupSummary rgb2 = run_tracking_trials(scenario_preset("table1-2m-rgb"), 20);
  const SetupSummary rgb4 = run_tracking_trials(scenario_preset("table1-4m-rgb"), 20);
  const SetupSummary rgbd2 = run_tracking_trials(scenario_preset("table1-2m-rgbd"), 20);
  const SetupSummary rgbd4 = run_tracking_trials(scenario_preset("table1-4m-rgbd"), 20);
  const harness::TrendRatios t = harness::trend_ratios(rgb2, rgb4, rgbd2, rgbd4);
  const bool pass = t.loss_4m_over_2m < 0.5 && t.ape_rgbd_over_rgb < 0.3 && t.jitter_filtered_over_raw < 0.5;
  report(3, pass,
         fmt("20 matched trials: loss 4m/2m %.3f, APE rgbd/rgb %.3f, jitter filtered/raw %.3f", t.loss_4m_over_2m,
             t.ape_rgbd_over_rgb, t.jitter_filtered_over_raw));
}

MarkerObservation observe(int id, const RigidTransform& pose, double size) {
  MarkerObservation o;
  o.marker_id = id;
  const auto canonical = canonical_marker_corners(size);
  for (int i = 0; i < 4; ++i) {
    o.corners_3d[i] = pose.apply(canonical[i]);
    o.valid_depth[i] = true;
  }
  return o;
}

void fusion_weights() {
  MarkerRig rig;
  rig.offsets[1] = RigidTransform::from_translation({0, 0, 0.5});
  rig.offsets[2] = RigidTransform::from_translation({0.01, 0, -0.5});
  const std::vector<MarkerObservation> fixture{
      observe(1, RigidTransform::from_translation({0, 0, 1}), rig.marker_size),
      observe(2, RigidTransform::from_translation({0, 0, 2}), rig.marker_size)};
  const FusedPose f = fuse_marker_poses(fixture, rig);
  // 1/1 and 1/4 normalized; translations 1.5 and (0.01, 0, 1.5).
  const Eigen::Vector3d expected(0.8 * 0.0 + 0.2 * 0.01, 0.0, 1.5);
  bool fixture_ok = f.contributing_markers.size() == 2 && f.contributing_markers[0].second == 0.8 &&
                    f.contributing_markers[1].second == 0.2 && (f.pose.translation() - expected).norm() < 1e-12;

  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> depth(0.4, 3.0);
  std::uniform_int_distribution<int> count(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    MarkerRig r;
    std::vector<MarkerObservation> obs;
    const int m = count(rng);
    for (int id = 0; id < m; ++id) {
      r.offsets[id] = oracle::random_transform(rng, 0.1);
      const RigidTransform pose = RigidTransform::from_axis_angle(
          Eigen::Vector3d::UnitY(), 0.3 * (id - 1.5), oracle::random_transform(rng, 0.3).translation() +
                                                          Eigen::Vector3d(0, 0, depth(rng)));
      obs.push_back(observe(id, pose, r.marker_size));
    }
    const FusedPose fp = fuse_marker_poses(obs, r);
    double sum = 0.0;
    for (const auto& [id, w] : fp.contributing_markers) sum += w;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  report(4, fixture_ok && worst <= 1e-9,
         fmt("fixture weights %.17g/%.17g, translation error %.1e m; 1000 random weight sums within %.1e",
             f.contributing_markers.empty() ? 0.0 : f.contributing_markers[0].second,
             f.contributing_markers.size() < 2 ? 0.0 : f.contributing_markers[1].second,
             (f.pose.translation() - expected).norm(), worst));
}

void head_localization() {
  const PointCloud tmpl = make_head_template();
  int accurate = 0;
  int improved = 0;
  double slowest = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    ScenarioConfig c = scenario_preset("head-scene");
    c.seed = trial_seed(c.seed, i);
    const RigidTransform truth = random_head_pose(c);
    const HeadScene scene = gen_head_scene(c, tmpl, truth);
    const auto t0 = Clock::now();
    const HeadLocalization h = locate_head(tmpl, scene.scene, scene.roi);
    slowest = std::max(slowest, seconds_since(t0));
    const auto fine = pose_error(h.refined.transform, truth);
    const auto coarse = pose_error(h.coarse.transform, truth);
    if (fine.translation_error <= 0.002 && fine.rotation_error <= deg2rad(2.0)) ++accurate;
    if (fine.translation_error <= coarse.translation_error) ++improved;
  }
  report(5, accurate >= 45 && improved >= 48 && slowest < 2.0,
         fmt("%d/50 within 2 mm and 2 deg, refined no worse than coarse in %d/50, slowest %.2f s", accurate, improved,
             slowest));
}

ExpertTrajectory line_trajectory(std::size_t samples, const std::vector<std::size_t>& checkpoints) {
  ExpertTrajectory t;
  for (std::size_t i = 0; i < samples; ++i) {
    t.samples.push_back({0.1 * static_cast<double>(i),
                         RigidTransform::from_translation({0.01 * static_cast<double>(i), 0.0, 0.5})});
  }
  for (std::size_t c : checkpoints) t.checkpoints.push_back({c, 0.03});
  return t;
}

GuidanceStep step_at(const GuidanceState& s, const ExpertTrajectory& t, double distance) {
  const RigidTransform& expert = t.samples[std::min(s.playback_index, t.samples.size() - 1)].pose;
  return guidance_step(s, t, RigidTransform::from_translation(expert.translation() + Eigen::Vector3d(0, distance, 0)),
                       expert);
}

void guidance_machine() {
  const ExpertTrajectory t = line_trajectory(4, {1, 3});
  std::size_t traces = 0;
  std::size_t mismatches = 0;
  for (int length = 1; length <= 12; ++length) {
    for (unsigned bits = 0; bits < (1u << length); ++bits) {
      ++traces;
      oracle::GuidanceMachine m;
      m.samples = t.samples.size();
      m.checkpoint_indices = {1, 3};
      GuidanceState s;
      for (int k = 0; k < length; ++k) {
        const bool near = (bits >> k) & 1u;
        const GuidanceStep step = step_at(s, t, near ? 0.0 : 1.0);
        const auto expected = m.step(near);
        if (step.event != oracle::to_event(expected) || step.state.phase != oracle::to_phase(m.phase) ||
            step.state.playback_index != m.index) {
          ++mismatches;
          break;
        }
        s = step.state;
      }
    }
  }
  const ExpertTrajectory long_t = line_trajectory(20, {10});
  const bool at_049 = step_at(GuidanceState{}, long_t, 0.049).event == GuidanceEvent::AnimationStarted;
  const bool at_051 = step_at(GuidanceState{}, long_t, 0.051).event == GuidanceEvent::AnimationStarted;
  report(6, mismatches == 0 && at_049 && !at_051,
         fmt("%zu traces, %zu mismatches; start at 0.049 m %s, at 0.051 m %s", traces, mismatches,
             at_049 ? "yes" : "no", at_051 ? "yes" : "no"));
}

bool close_rel(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

void metrics_oracle() {
  std::mt19937_64 rng(1007);
  std::bernoulli_distribution lost(0.2);
  std::normal_distribution<double> noise(0.0, 0.004);
  int exact = 0;
  double worst = 0.0;
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
    const bool counts = m.frames_evaluated == a.frames && m.jfp.frames_lost == j.lost &&
                        m.jfp.detected_pairs == j.pairs && m.jfp.jitter_transitions == j.transitions;
    const bool means = close_rel(m.ape_translation_mm.mean, a.mean_mm) && close_rel(m.ape_rotation_deg.mean, a.mean_deg);
    worst = std::max({worst, std::abs(m.ape_translation_mm.mean - a.mean_mm) / a.mean_mm,
                      std::abs(m.ape_rotation_deg.mean - a.mean_deg) / a.mean_deg});
    if (counts && means) ++exact;
  }
  report(7, exact == 100, fmt("%d/100 tracks agree with the reference, worst relative mean difference %.1e", exact,
                              worst));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MRANCHOR_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void metrics_determinism() {
  const fs::path root = fs::temp_directory_path() / "mranchor_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  bool ran = true;
  for (const char* run : {"a", "b"}) {
    const std::string dir = (root / run).string();
    ran = ran && run_cli("simulate --scenario table1-4m-rgbd --seed 42 --out " + dir) == 0 &&
          run_cli("metrics " + dir) == 0;
  }
  const std::string a = slurp(root / "a" / "metrics.json");
  const std::string b = slurp(root / "b" / "metrics.json");
  report(8, ran && !a.empty() && a == b,
         fmt("two seeded runs: %s, metrics.json %zu bytes, %s", ran ? "exit 0" : "non-zero exit", a.size(),
             a == b ? "identical" : "different"));
  fs::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<void (*)()> criteria{closed_form_calibration, noisy_calibration, tracking_trends, fusion_weights,
                                         head_localization,       guidance_machine,  metrics_oracle,  metrics_determinism};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), false, std::string("exception: ") + e.what());
    }
  }
  return failures == 0 ? 0 : 1;
}
