#include "mranchor/io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "mranchor/error.hpp"

namespace mranchor::io {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void format_error(const fs::path& path, std::size_t line, const std::string& what) {
  std::string where = path.string();
  if (line > 0) where += ":" + std::to_string(line);
  throw Error(ErrorCode::Format, where + ": " + what);
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

json read_json(const fs::path& path) {
  std::ifstream in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    format_error(path, 0, e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

// Field access with format errors that name the field.
struct Reader {
  const fs::path& path;
  std::size_t line;

  const json& field(const json& j, const char* key) const {
    if (!j.is_object()) format_error(path, line, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) format_error(path, line, std::string("missing field '") + key + "'");
    return *it;
  }

  double number(const json& j, const char* what) const {
    if (!j.is_number()) format_error(path, line, std::string("'") + what + "' must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) format_error(path, line, std::string("'") + what + "' must be finite");
    return v;
  }

  template <int N>
  Eigen::Matrix<double, N, 1> vec(const json& j, const char* what) const {
    if (!j.is_array() || j.size() != N) {
      format_error(path, line, std::string("'") + what + "' must be an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = number(j[static_cast<std::size_t>(i)], what);
    return v;
  }

  RigidTransform transform(const json& j) const {
    const Eigen::Vector4d q = vec<4>(field(j, "q"), "q");
    const Eigen::Vector3d p = vec<3>(field(j, "p"), "p");
    if (std::abs(q.norm() - 1.0) > 1e-3) format_error(path, line, "'q' is not a unit quaternion");
    return {Eigen::Quaterniond(q[0], q[1], q[2], q[3]), p};
  }
};

json transform_json(const RigidTransform& t) {
  const auto& q = t.rotation();
  const auto& p = t.translation();
  return {{"q", {q.w(), q.x(), q.y(), q.z()}}, {"p", {p.x(), p.y(), p.z()}}};
}

template <class F>
void for_each_line(const fs::path& path, F&& f) {
  std::ifstream in = open_in(path);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      format_error(path, line, e.what());
    }
    f(j, Reader{path, line});
  }
}

}  // namespace

std::vector<TimedPose> read_pose_stream(const fs::path& path) {
  std::vector<TimedPose> out;
  for_each_line(path, [&](const json& j, const Reader& r) {
    out.push_back({r.number(r.field(j, "t"), "t"), r.transform(j)});
  });
  return out;
}

void write_pose_stream(const fs::path& path, const std::vector<TimedPose>& poses) {
  std::ofstream out = open_out(path);
  for (const auto& p : poses) {
    json j = transform_json(p.pose);
    j["t"] = p.timestamp;
    out << j.dump() << '\n';
  }
  finish(out, path);
}

std::vector<MarkerObservation> read_marker_log(const fs::path& path) {
  std::vector<MarkerObservation> out;
  for_each_line(path, [&](const json& j, const Reader& r) {
    MarkerObservation obs;
    obs.timestamp = r.number(r.field(j, "t"), "t");
    const json& id = r.field(j, "id");
    if (!id.is_number_integer()) format_error(path, r.line, "'id' must be an integer");
    obs.marker_id = id.get<int>();
    const json& c2d = r.field(j, "c2d");
    const json& c3d = r.field(j, "c3d");
    const json& valid = r.field(j, "valid");
    if (!c2d.is_array() || c2d.size() != 4 || !c3d.is_array() || c3d.size() != 4 || !valid.is_array() ||
        valid.size() != 4) {
      format_error(path, r.line, "'c2d', 'c3d' and 'valid' must each hold 4 entries");
    }
    for (std::size_t c = 0; c < 4; ++c) {
      obs.corners_2d[c] = r.vec<2>(c2d[c], "c2d");
      if (!valid[c].is_boolean()) format_error(path, r.line, "'valid' entries must be booleans");
      obs.valid_depth[c] = valid[c].get<bool>();
      if (c3d[c].is_null()) {
        if (obs.valid_depth[c]) format_error(path, r.line, "corner marked valid has null 'c3d'");
        obs.corners_3d[c].setZero();
      } else {
        obs.corners_3d[c] = r.vec<3>(c3d[c], "c3d");
      }
    }
    out.push_back(obs);
  });
  return out;
}

void write_marker_log(const fs::path& path, const std::vector<MarkerObservation>& log) {
  std::ofstream out = open_out(path);
  for (const auto& obs : log) {
    json c2d = json::array();
    json c3d = json::array();
    json valid = json::array();
    for (std::size_t c = 0; c < 4; ++c) {
      c2d.push_back({obs.corners_2d[c].x(), obs.corners_2d[c].y()});
      if (obs.valid_depth[c]) {
        c3d.push_back({obs.corners_3d[c].x(), obs.corners_3d[c].y(), obs.corners_3d[c].z()});
      } else {
        c3d.push_back(nullptr);
      }
      valid.push_back(obs.valid_depth[c]);
    }
    const json j = {{"t", obs.timestamp}, {"id", obs.marker_id}, {"c2d", c2d}, {"c3d", c3d}, {"valid", valid}};
    out << j.dump() << '\n';
  }
  finish(out, path);
}

MarkerRig read_rig(const fs::path& path) {
  const json j = read_json(path);
  const Reader r{path, 0};
  MarkerRig rig;
  rig.marker_size = r.number(r.field(j, "marker_size"), "marker_size");
  if (j.contains("intrinsics")) {
    const json& k = j["intrinsics"];
    rig.intrinsics.fx = r.number(r.field(k, "fx"), "fx");
    rig.intrinsics.fy = r.number(r.field(k, "fy"), "fy");
    rig.intrinsics.cx = r.number(r.field(k, "cx"), "cx");
    rig.intrinsics.cy = r.number(r.field(k, "cy"), "cy");
    const json& w = r.field(k, "width");
    const json& h = r.field(k, "height");
    if (!w.is_number_integer() || !h.is_number_integer()) format_error(path, 0, "image size must be integers");
    rig.intrinsics.width = w.get<int>();
    rig.intrinsics.height = h.get<int>();
  }
  const json& markers = r.field(j, "markers");
  if (!markers.is_array()) format_error(path, 0, "'markers' must be an array");
  for (const auto& m : markers) {
    const json& id = r.field(m, "id");
    if (!id.is_number_integer()) format_error(path, 0, "marker 'id' must be an integer");
    if (!rig.offsets.emplace(id.get<int>(), r.transform(m)).second) {
      format_error(path, 0, "duplicate marker id " + std::to_string(id.get<int>()));
    }
  }
  try {
    rig.validate();
  } catch (const Error& e) {
    format_error(path, 0, e.what());
  }
  return rig;
}

void write_rig(const fs::path& path, const MarkerRig& rig) {
  json markers = json::array();
  for (const auto& [id, offset] : rig.offsets) {
    json m = transform_json(offset);
    m["id"] = id;
    markers.push_back(m);
  }
  const auto& k = rig.intrinsics;
  const json j = {{"marker_size", rig.marker_size},
                  {"intrinsics",
                   {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
                  {"markers", markers}};
  write_json(path, j);
}

RigidTransform read_transform(const fs::path& path) {
  return Reader{path, 0}.transform(read_json(path));
}

void write_transform(const fs::path& path, const RigidTransform& t) { write_json(path, transform_json(t)); }

RegionOfInterest read_roi(const fs::path& path) {
  const json j = read_json(path);
  const Reader r{path, 0};
  RegionOfInterest roi;
  roi.center = r.transform(j);
  roi.half_extents = r.vec<3>(r.field(j, "half_extents"), "half_extents");
  try {
    roi.validate();
  } catch (const Error& e) {
    format_error(path, 0, e.what());
  }
  return roi;
}

void write_roi(const fs::path& path, const RegionOfInterest& roi) {
  json j = transform_json(roi.center);
  j["half_extents"] = {roi.half_extents.x(), roi.half_extents.y(), roi.half_extents.z()};
  write_json(path, j);
}

std::vector<Checkpoint> read_checkpoints(const fs::path& path) {
  const json j = read_json(path);
  const Reader r{path, 0};
  const json& list = r.field(j, "checkpoints");
  if (!list.is_array()) format_error(path, 0, "'checkpoints' must be an array");
  std::vector<Checkpoint> out;
  for (const auto& c : list) {
    const json& index = r.field(c, "index");
    if (!index.is_number_unsigned()) format_error(path, 0, "checkpoint 'index' must be a non-negative integer");
    out.push_back({index.get<std::size_t>(), r.number(r.field(c, "threshold"), "threshold")});
  }
  return out;
}

void write_checkpoints(const fs::path& path, const std::vector<Checkpoint>& checkpoints) {
  json list = json::array();
  for (const auto& c : checkpoints) list.push_back({{"index", c.sample_index}, {"threshold", c.threshold}});
  write_json(path, {{"checkpoints", list}});
}

// ---------------------------------------------------------------------------
// PLY

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t size = 0;
};

std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "float" || type == "int32" || type == "uint32" ||
      type == "float32") {
    return 4;
  }
  if (type == "double" || type == "float64") return 8;
  return 0;
}

double decode_le(const char* bytes, const std::string& type) {
  unsigned char b[8];
  const std::size_t n = ply_type_size(type);
  std::memcpy(b, bytes, n);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + n);
  if (type == "float" || type == "float32") {
    float v;
    std::memcpy(&v, b, 4);
    return v;
  }
  if (type == "double" || type == "float64") {
    double v;
    std::memcpy(&v, b, 8);
    return v;
  }
  if (type == "char" || type == "int8") return static_cast<std::int8_t>(b[0]);
  if (type == "uchar" || type == "uint8") return b[0];
  if (type == "short" || type == "int16") {
    std::int16_t v;
    std::memcpy(&v, b, 2);
    return v;
  }
  if (type == "ushort" || type == "uint16") {
    std::uint16_t v;
    std::memcpy(&v, b, 2);
    return v;
  }
  if (type == "int" || type == "int32") {
    std::int32_t v;
    std::memcpy(&v, b, 4);
    return v;
  }
  std::uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

}  // namespace

PointCloud read_ply(const fs::path& path) {
  std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line != "ply") format_error(path, 1, "missing 'ply' magic");

  std::string format;
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<PlyProperty> props;
  bool trailing_elements = false;
  while (true) {
    if (!next_line()) format_error(path, line_no, "unterminated header");
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "end_header") break;
    if (word == "format") {
      std::string version;
      ss >> format >> version;
      if (format != "ascii" && format != "binary_little_endian") {
        format_error(path, line_no, "unsupported format '" + format + "'");
      }
    } else if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      if (!ss) format_error(path, line_no, "malformed element line");
      in_vertex = name == "vertex";
      if (in_vertex) {
        if (seen_vertex) format_error(path, line_no, "duplicate vertex element");
        if (!props.empty() || trailing_elements) {
          format_error(path, line_no, "vertex must be the first element");
        }
        vertex_count = count;
        seen_vertex = true;
      } else if (seen_vertex) {
        trailing_elements = true;
      } else {
        format_error(path, line_no, "vertex must be the first element");
      }
    } else if (word == "property") {
      if (!in_vertex) continue;
      PlyProperty p;
      ss >> p.type;
      if (p.type == "list") format_error(path, line_no, "list properties are not supported on vertices");
      ss >> p.name;
      p.size = ply_type_size(p.type);
      if (p.size == 0 || p.name.empty()) format_error(path, line_no, "unknown property type '" + p.type + "'");
      props.push_back(p);
    } else if (word != "comment" && word != "obj_info") {
      format_error(path, line_no, "unexpected header line '" + line + "'");
    }
  }
  if (format.empty()) format_error(path, line_no, "missing format line");
  if (!seen_vertex) format_error(path, line_no, "missing vertex element");

  auto index_of = [&](const char* name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i) {
      if (props[i].name == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int ix = index_of("x");
  const int iy = index_of("y");
  const int iz = index_of("z");
  const int inx = index_of("nx");
  const int iny = index_of("ny");
  const int inz = index_of("nz");
  if (ix < 0 || iy < 0 || iz < 0) format_error(path, line_no, "vertex needs x, y and z");
  const bool normals = inx >= 0 && iny >= 0 && inz >= 0;

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  if (normals) cloud.normals.reserve(vertex_count);
  std::vector<double> values(props.size());

  if (format == "ascii") {
    for (std::size_t v = 0; v < vertex_count; ++v) {
      if (!next_line()) format_error(path, line_no, "expected " + std::to_string(vertex_count) + " vertices");
      std::istringstream ss(line);
      for (auto& value : values) {
        if (!(ss >> value)) format_error(path, line_no, "too few vertex values");
      }
      cloud.points.emplace_back(values[ix], values[iy], values[iz]);
      if (normals) cloud.normals.emplace_back(values[inx], values[iny], values[inz]);
    }
  } else {
    std::size_t stride = 0;
    for (const auto& p : props) stride += p.size;
    std::vector<char> buffer(stride);
    for (std::size_t v = 0; v < vertex_count; ++v) {
      if (!in.read(buffer.data(), static_cast<std::streamsize>(stride))) {
        format_error(path, 0, "binary vertex data truncated at vertex " + std::to_string(v));
      }
      std::size_t offset = 0;
      for (std::size_t i = 0; i < props.size(); ++i) {
        values[i] = decode_le(buffer.data() + offset, props[i].type);
        offset += props[i].size;
      }
      cloud.points.emplace_back(values[ix], values[iy], values[iz]);
      if (normals) cloud.normals.emplace_back(values[inx], values[iny], values[inz]);
    }
  }

  for (const auto& p : cloud.points) {
    if (!p.allFinite()) format_error(path, 0, "non-finite vertex coordinate");
  }
  // Stored normals are re-normalized; float storage loses unit length.
  for (auto& n : cloud.normals) {
    const double len = n.norm();
    if (!std::isfinite(len) || len < 1e-6) format_error(path, 0, "degenerate vertex normal");
    n /= len;
  }
  return cloud;
}

void write_ply(const fs::path& path, const PointCloud& cloud, bool binary) {
  cloud.validate();
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  const bool normals = cloud.has_normals();
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (normals) out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "end_header\n";

  auto put = [&](double value) {
    const auto v = static_cast<float>(value);
    if (binary) {
      unsigned char b[4];
      std::memcpy(b, &v, 4);
      if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 4);
      out.write(reinterpret_cast<const char*>(b), 4);
    } else {
      out << json(v).dump();
    }
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    put(p.x());
    if (!binary) out << ' ';
    put(p.y());
    if (!binary) out << ' ';
    put(p.z());
    if (normals) {
      const auto& n = cloud.normals[i];
      for (int k = 0; k < 3; ++k) {
        if (!binary) out << ' ';
        put(n[k]);
      }
    }
    if (!binary) out << '\n';
  }
  finish(out, path);
}

}  // namespace mranchor::io
