#pragma once

// Run directories: scenario files written by `simulate`, evaluated by
// `metrics`, and the multi-trial tracking table written by `report`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mranchor/sim.hpp"

namespace mranchor::harness {

enum class ScenarioKind { Tracking, Calibration, HeadScene, Guidance };

/// Derived from the preset name: table1-*, calibration*, head-scene*,
/// guidance*. Throws InvalidArgument otherwise.
ScenarioKind scenario_kind(const ScenarioConfig& config);
const char* to_string(ScenarioKind kind) noexcept;

/// Mount used for simulated calibration runs.
RigidTransform nominal_headset_from_camera();

/// Writes scenario.json plus the kind-specific inputs and ground truth.
/// Creates `dir` if needed.
void write_run(const ScenarioConfig& config, const std::filesystem::path& dir);

/// Evaluates a run directory, writes metrics.json (deterministic) and, for
/// tracking runs, throughput.json. Returns a one-line summary.
std::string evaluate_run(const std::filesystem::path& dir);

struct ReportOptions {
  std::size_t trials = 20;
  std::optional<std::uint64_t> seed;  // base seed for every setup; presets' own otherwise
  std::size_t frames = 0;             // 0 keeps the preset frame count
  bool with_fps = false;
};

/// Median over trials of the matched-trial ratios behind the tracking
/// trends: 4-marker / 2-marker loss, RGB-D / RGB-proxy APE and filtered /
/// raw jitter (RGB-proxy setups, where raw jitter is non-zero).
struct TrendRatios {
  double loss_4m_over_2m = 0.0;
  double ape_rgbd_over_rgb = 0.0;
  double jitter_filtered_over_raw = 0.0;
};

/// Writes `out` (JSON) and the same path with a .txt extension (table with
/// two decimals). Returns a one-line summary.
std::string write_report(const std::filesystem::path& out, const ReportOptions& options);

double median(std::vector<double> values);

/// Ratios from the four table1 setups run with matched seeds.
TrendRatios trend_ratios(const SetupSummary& rgb2, const SetupSummary& rgb4, const SetupSummary& rgbd2,
                         const SetupSummary& rgbd4);

}  // namespace mranchor::harness
