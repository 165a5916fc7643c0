#pragma once

// File formats shared by the CLI and the harness. Readers throw Io when a
// file cannot be opened and Format (with a line number where it applies)
// when its content does not parse.

#include <filesystem>
#include <vector>

#include "mranchor/geometry.hpp"
#include "mranchor/guidance.hpp"
#include "mranchor/marker_fusion.hpp"
#include "mranchor/registration.hpp"

namespace mranchor::io {

// JSONL, one {"t", "q": [w,x,y,z], "p": [x,y,z]} record per line.
std::vector<TimedPose> read_pose_stream(const std::filesystem::path& path);
void write_pose_stream(const std::filesystem::path& path, const std::vector<TimedPose>& poses);

// JSONL, one {"t", "id", "c2d", "c3d", "valid"} record per line; c3d
// entries are null where depth is invalid.
std::vector<MarkerObservation> read_marker_log(const std::filesystem::path& path);
void write_marker_log(const std::filesystem::path& path, const std::vector<MarkerObservation>& log);

// {"marker_size", "intrinsics": {...}, "markers": [{"id", "q", "p"}]}; each
// marker entry is the model pose in that marker's frame.
MarkerRig read_rig(const std::filesystem::path& path);
void write_rig(const std::filesystem::path& path, const MarkerRig& rig);

// {"q", "p"}
RigidTransform read_transform(const std::filesystem::path& path);
void write_transform(const std::filesystem::path& path, const RigidTransform& t);

// {"q", "p", "half_extents"}
RegionOfInterest read_roi(const std::filesystem::path& path);
void write_roi(const std::filesystem::path& path, const RegionOfInterest& roi);

// {"checkpoints": [{"index", "threshold"}]}
std::vector<Checkpoint> read_checkpoints(const std::filesystem::path& path);
void write_checkpoints(const std::filesystem::path& path, const std::vector<Checkpoint>& checkpoints);

// PLY with float or double x, y, z and optional nx, ny, nz; ascii or
// binary_little_endian. Other vertex properties are skipped. Written as
// 32-bit floats.
PointCloud read_ply(const std::filesystem::path& path);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud, bool binary = true);

}  // namespace mranchor::io
