#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpk/autolabel.hpp"
#include "hpk/evalmetrics.hpp"
#include "hpk/image.hpp"

namespace hpk {

using json = nlohmann::json;

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

// One dataset frame: image path (relative to the manifest), ground-truth
// vehicles and lane boundaries, optional radar returns and pose reference.
struct FrameRecord {
  int frame_id = 0;
  std::string image;
  std::string camera_id = "front";
  double pose_t = -1;  // timestamp into the trajectory file, < 0 when absent
  std::vector<VehicleBox> vehicles;
  std::vector<LaneAnnotation> lanes;
  std::vector<RadarReturn> radar;
};

inline json frame_to_json(const FrameRecord& rec) {
  json j;
  j["frame_id"] = rec.frame_id;
  j["image"] = rec.image;
  j["camera_id"] = rec.camera_id;
  if (rec.pose_t >= 0) j["pose_t"] = rec.pose_t;
  j["vehicles"] = json::array();
  for (const VehicleBox& v : rec.vehicles)
    j["vehicles"].push_back({{"x1", v.rect.x1},
                             {"y1", v.rect.y1},
                             {"x2", v.rect.x2},
                             {"y2", v.rect.y2},
                             {"depth_m", v.depth}});
  j["lanes"] = json::array();
  for (const LaneAnnotation& l : rec.lanes) {
    json knots = json::array();
    for (const Vec3& k : l.knots) knots.push_back({k.x, k.y, k.z});
    json lj{{"id", l.boundary_id}, {"knots", knots}};
    if (!l.occluded.empty()) lj["occluded"] = l.occluded;
    j["lanes"].push_back(lj);
  }
  if (!rec.radar.empty()) {
    j["radar"] = json::array();
    for (const RadarReturn& r : rec.radar)
      j["radar"].push_back({{"u", r.pixel.x}, {"v", r.pixel.y}, {"depth_m", r.depth}});
  }
  return j;
}

inline FrameRecord frame_from_json(const json& j, const std::string& where) {
  detail::check_keys(
      j, {"frame_id", "image", "camera_id", "pose_t", "vehicles", "lanes", "radar"}, where);
  FrameRecord rec;
  if (!j.contains("image") || !j["image"].is_string())
    throw ConfigError(where + ": missing image path");
  rec.image = j["image"].get<std::string>();
  rec.frame_id = j.value("frame_id", 0);
  rec.camera_id = j.value("camera_id", std::string("front"));
  rec.pose_t = j.value("pose_t", -1.0);
  for (const json& v : j.value("vehicles", json::array())) {
    detail::check_keys(v, {"x1", "y1", "x2", "y2", "depth_m"}, where + " vehicle");
    VehicleBox b;
    b.rect = {v.at("x1").get<double>(), v.at("y1").get<double>(), v.at("x2").get<double>(),
              v.at("y2").get<double>()};
    b.depth = v.at("depth_m").get<double>();
    if (!b.rect.valid()) throw ConfigError(where + ": invalid vehicle rect");
    if (b.depth <= 0) throw ConfigError(where + ": vehicle depth must be > 0");
    rec.vehicles.push_back(b);
  }
  for (const json& l : j.value("lanes", json::array())) {
    detail::check_keys(l, {"id", "knots", "occluded"}, where + " lane");
    LaneAnnotation ann;
    ann.boundary_id = l.at("id").get<int>();
    for (const json& k : l.at("knots")) {
      if (!k.is_array() || k.size() != 3)
        throw ConfigError(where + ": lane knot must be [u, v, depth_m]");
      const double d = k[2].get<double>();
      if (d <= 0) throw ConfigError(where + ": lane knot depth must be > 0");
      ann.knots.push_back({k[0].get<double>(), k[1].get<double>(), d});
    }
    if (l.contains("occluded")) ann.occluded = l["occluded"].get<std::vector<std::uint8_t>>();
    rec.lanes.push_back(std::move(ann));
  }
  for (const json& r : j.value("radar", json::array())) {
    detail::check_keys(r, {"u", "v", "depth_m"}, where + " radar");
    rec.radar.push_back({{r.at("u").get<double>(), r.at("v").get<double>()},
                         r.at("depth_m").get<double>()});
  }
  return rec;
}

// JSON-lines manifest, one frame per line. `check_images` verifies that each
// referenced image exists next to the manifest.
inline std::vector<FrameRecord> load_manifest(const std::string& path, bool check_images = true) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<FrameRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(where + ": malformed JSON (" + e.what() + ")");
    }
    FrameRecord rec = frame_from_json(j, where);
    if (check_images && !std::filesystem::exists(base / rec.image))
      throw ConfigError(where + ": referenced image not found: " + rec.image);
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_manifest(const std::string& path, const std::vector<FrameRecord>& records) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open manifest for writing: " + path);
  for (const FrameRecord& rec : records) os << frame_to_json(rec).dump() << "\n";
}

// --- detections (inference output) -----------------------------------------

struct LaneDetection {
  int id = 0;
  std::vector<Vec3> knots;  // (u, v, depth_m)
};

struct FrameDetections {
  int frame_id = 0;
  std::vector<VehicleBox> vehicles;
  std::vector<LaneDetection> lanes;
};

inline json detections_to_json(const FrameDetections& d) {
  json j;
  j["frame_id"] = d.frame_id;
  j["vehicles"] = json::array();
  for (const VehicleBox& v : d.vehicles)
    j["vehicles"].push_back({{"x1", v.rect.x1},
                             {"y1", v.rect.y1},
                             {"x2", v.rect.x2},
                             {"y2", v.rect.y2},
                             {"depth_m", v.depth},
                             {"score", v.score}});
  j["lanes"] = json::array();
  for (const LaneDetection& l : d.lanes) {
    json knots = json::array();
    for (const Vec3& k : l.knots) knots.push_back({k.x, k.y, k.z});
    j["lanes"].push_back({{"id", l.id}, {"knots", knots}});
  }
  return j;
}

inline FrameDetections detections_from_json(const json& j, const std::string& where) {
  detail::check_keys(j, {"frame_id", "vehicles", "lanes"}, where);
  FrameDetections d;
  d.frame_id = j.value("frame_id", 0);
  for (const json& v : j.value("vehicles", json::array())) {
    detail::check_keys(v, {"x1", "y1", "x2", "y2", "depth_m", "score"}, where + " vehicle");
    VehicleBox b;
    b.rect = {v.at("x1").get<double>(), v.at("y1").get<double>(), v.at("x2").get<double>(),
              v.at("y2").get<double>()};
    b.depth = v.at("depth_m").get<double>();
    b.score = v.value("score", 1.0);
    d.vehicles.push_back(b);
  }
  for (const json& l : j.value("lanes", json::array())) {
    detail::check_keys(l, {"id", "knots"}, where + " lane");
    LaneDetection lane;
    lane.id = l.at("id").get<int>();
    for (const json& k : l.at("knots"))
      lane.knots.push_back({k[0].get<double>(), k[1].get<double>(), k[2].get<double>()});
    d.lanes.push_back(std::move(lane));
  }
  return d;
}

inline std::vector<FrameDetections> load_detections(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open detections: " + path);
  std::vector<FrameDetections> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      out.push_back(detections_from_json(json::parse(line), where));
    } catch (const json::exception& e) {
      throw ConfigError(where + ": malformed JSON (" + e.what() + ")");
    }
  }
  return out;
}

inline void write_detections(const std::string& path, const std::vector<FrameDetections>& dets) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open detections for writing: " + path);
  for (const FrameDetections& d : dets) os << detections_to_json(d).dump() << "\n";
}

// --- point clouds and trajectories ------------------------------------------

inline constexpr char kCloudMagic[4] = {'H', 'P', 'K', 'C'};

// CSV with an "x,y,z,intensity" header, or the binary variant
// ("HPKC", u64 count, then f32 x/y/z/intensity records, little-endian).
// The reader sniffs the leading bytes.
inline void write_cloud_csv(const std::string& path, const std::vector<LidarPoint>& cloud) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open cloud for writing: " + path);
  os << "x,y,z,intensity\n";
  char buf[160];
  for (const LidarPoint& p : cloud) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.3f\n", p.x, p.y, p.z, p.intensity);
    os << buf;
  }
}

inline void write_cloud_binary(const std::string& path, const std::vector<LidarPoint>& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open cloud for writing: " + path);
  os.write(kCloudMagic, 4);
  wire::put_u64(os, cloud.size());
  for (const LidarPoint& p : cloud) {
    wire::put_f32(os, static_cast<float>(p.x));
    wire::put_f32(os, static_cast<float>(p.y));
    wire::put_f32(os, static_cast<float>(p.z));
    wire::put_f32(os, static_cast<float>(p.intensity));
  }
}

inline std::vector<LidarPoint> load_cloud(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open cloud: " + path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  std::vector<LidarPoint> out;
  if (std::memcmp(magic, kCloudMagic, 4) == 0) {
    std::uint64_t count;
    if (!wire::get_u64(is, count)) throw ConfigError("truncated cloud: " + path);
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      float v[4];
      for (float& f : v)
        if (!wire::get_f32(is, f)) throw ConfigError("truncated cloud: " + path);
      out.push_back({v[0], v[1], v[2], v[3]});
    }
    return out;
  }
  is.seekg(0);
  std::string line;
  if (!std::getline(is, line) || line.rfind("x,y,z,intensity", 0) != 0)
    throw ConfigError("cloud CSV must start with an 'x,y,z,intensity' header: " + path);
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    LidarPoint p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &p.x, &p.y, &p.z, &p.intensity) != 4)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad cloud row");
    out.push_back(p);
  }
  return out;
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open trajectory for writing: " + path);
  os << "t,x,y,z,heading\n";
  char buf[200];
  for (const Pose& p : traj.poses) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.9f\n", p.t, p.x, p.y, p.z, p.heading);
    os << buf;
  }
}

inline Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open trajectory: " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,x,y,z,heading", 0) != 0)
    throw ConfigError("trajectory CSV must start with a 't,x,y,z,heading' header: " + path);
  Trajectory traj;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    Pose p;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &p.t, &p.x, &p.y, &p.z, &p.heading) != 5)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad trajectory row");
    traj.poses.push_back(p);
  }
  traj.build();
  return traj;
}

// Pose interpolated at timestamp t (linear, heading included).
inline Pose pose_at_time(const Trajectory& traj, double t) {
  const auto& ps = traj.poses;
  if (ps.empty()) throw ConfigError("empty trajectory");
  if (t <= ps.front().t) return ps.front();
  if (t >= ps.back().t) return ps.back();
  for (std::size_t i = 1; i < ps.size(); ++i) {
    if (ps[i].t < t) continue;
    const double span = ps[i].t - ps[i - 1].t;
    const double a = span > 0 ? (t - ps[i - 1].t) / span : 0.0;
    return {t, ps[i - 1].x + a * (ps[i].x - ps[i - 1].x),
            ps[i - 1].y + a * (ps[i].y - ps[i - 1].y),
            ps[i - 1].z + a * (ps[i].z - ps[i - 1].z),
            ps[i - 1].heading + a * (ps[i].heading - ps[i - 1].heading)};
  }
  return ps.back();
}

// --- boundary serialization --------------------------------------------------

inline json boundaries_to_json(const std::vector<BoundaryPolyline>& boundaries) {
  json arr = json::array();
  for (const BoundaryPolyline& b : boundaries) {
    json points = json::array();
    for (const Vec3& p : b.points) points.push_back({p.x, p.y, p.z});
    arr.push_back({{"id", b.boundary_id()},
                   {"side", b.side},
                   {"offset_index", b.offset_index},
                   {"points", points}});
  }
  return arr;
}

inline std::vector<KnotCorrection> load_corrections(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open corrections: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": malformed JSON (" + std::string(e.what()) + ")");
  }
  if (!j.is_array()) throw ConfigError(path + ": corrections must be a JSON array");
  std::vector<KnotCorrection> out;
  for (const json& c : j) {
    detail::check_keys(c, {"boundary_id", "knot_index", "x", "y", "z"}, path + " correction");
    out.push_back({c.at("boundary_id").get<int>(), c.at("knot_index").get<int>(),
                   {c.at("x").get<double>(), c.at("y").get<double>(), c.at("z").get<double>()}});
  }
  return out;
}

}  // namespace hpk
