#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hpk/camera.hpp"
#include "hpk/detect.hpp"

namespace hpk {

struct LidarPoint {
  double x = 0, y = 0, z = 0;  // map frame, meters
  double intensity = 0;        // [0, 255]
};

struct Pose {
  double t = 0;
  double x = 0, y = 0, z = 0;
  double heading = 0;  // radians, CCW from +x
};

// Ego path through the map, piecewise linear, parameterized by 2D arc length.
struct Trajectory {
  std::vector<Pose> poses;
  std::vector<double> arc;  // cumulative arc length per pose

  void build() {
    if (poses.size() < 2) throw ConfigError("trajectory needs at least 2 poses");
    arc.assign(poses.size(), 0.0);
    for (std::size_t i = 1; i < poses.size(); ++i) {
      const double d = std::hypot(poses[i].x - poses[i - 1].x, poses[i].y - poses[i - 1].y);
      if (d <= 0) throw ConfigError("trajectory contains duplicate consecutive poses");
      arc[i] = arc[i - 1] + d;
    }
  }

  double length() const { return arc.empty() ? 0.0 : arc.back(); }

  struct Frame {
    Vec3 pos;
    Vec2 tangent;       // unit, along travel
    Vec2 normal_right;  // unit, 90 degrees clockwise from tangent
  };

  Frame frame_at(double s) const {
    if (arc.empty()) throw ConfigError("trajectory not built");
    s = std::clamp(s, 0.0, length());
    std::size_t i = 1;
    while (i + 1 < poses.size() && arc[i] < s) ++i;
    const Pose& a = poses[i - 1];
    const Pose& b = poses[i];
    const double seg = arc[i] - arc[i - 1];
    const double t = seg > 0 ? (s - arc[i - 1]) / seg : 0.0;
    Frame f;
    f.pos = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)};
    const double nx = (b.x - a.x) / seg, ny = (b.y - a.y) / seg;
    f.tangent = {nx, ny};
    f.normal_right = {ny, -nx};
    return f;
  }

  struct Projection {
    double s = 0;        // arc length of the closest trajectory point
    double lateral = 0;  // signed offset, right of travel positive
    double ground_z = 0; // trajectory height at s
  };

  // Closest-point projection of (x, y) onto the path.
  Projection project(double x, double y) const {
    if (arc.empty()) throw ConfigError("trajectory not built");
    Projection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < poses.size(); ++i) {
      const Pose& a = poses[i - 1];
      const Pose& b = poses[i];
      const double vx = b.x - a.x, vy = b.y - a.y;
      const double len2 = vx * vx + vy * vy;
      const double t = std::clamp(((x - a.x) * vx + (y - a.y) * vy) / len2, 0.0, 1.0);
      const double px = a.x + t * vx, py = a.y + t * vy;
      const double d2 = sq(x - px) + sq(y - py);
      if (d2 >= best_d2) continue;
      best_d2 = d2;
      const double inv = 1.0 / std::sqrt(len2);
      const double tx = vx * inv, ty = vy * inv;
      best.s = arc[i - 1] + t * std::sqrt(len2);
      best.lateral = ty * (x - px) - tx * (y - py);  // right positive
      best.ground_z = a.z + t * (b.z - a.z);
    }
    return best;
  }
};

struct BoundaryPolyline {
  std::string side;       // "left" or "right"
  int offset_index = 0;   // 0 = ego boundary, k = k-th replica outward
  std::vector<Vec3> points;      // map frame, ordered by arc length
  std::vector<double> arcs;      // arc position of each knot
  std::vector<double> laterals;  // signed lateral offset of each knot

  // Manifest/report id: ego pair is -1/+1, replicas count outward.
  int boundary_id() const {
    const int base = offset_index + 1;
    return side == "left" ? -base : base;
  }
};

struct PointFilterParams {
  double intensity_min = 120;  // of 255
  double ground_tol_m = 0.3;
  double lat_min_m = 1.4;      // exclusive
  double lat_max_m = 2.2;      // exclusive
};

struct FilteredPoints {
  std::vector<LidarPoint> left, right;
};

// Keeps candidate lane-paint returns: bright, near the local ground plane and
// within the lateral band on either side of the path. Band edges are strict
// inequalities; negative lateral (left of travel) fills the left set.
inline FilteredPoints filter_points(const std::vector<LidarPoint>& cloud,
                                    const Trajectory& traj, const PointFilterParams& p = {}) {
  FilteredPoints out;
  for (const LidarPoint& pt : cloud) {
    if (pt.intensity < p.intensity_min) continue;
    const Trajectory::Projection proj = traj.project(pt.x, pt.y);
    if (std::abs(pt.z - proj.ground_z) > p.ground_tol_m) continue;
    const double lat = std::abs(proj.lateral);
    if (!(lat > p.lat_min_m && lat < p.lat_max_m)) continue;
    (proj.lateral < 0 ? out.left : out.right).push_back(pt);
  }
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
  return 0.5 * (v[n / 2 - 1] + hi);
}

}  // namespace detail

// Fits a piecewise linear boundary parallel to the trajectory: points are
// binned by arc length and each knot takes the median lateral offset and
// height of its bin. Empty bins interpolate between neighbors; more than
// half empty is a failure ("boundary not found").
inline BoundaryPolyline fit_boundary(const std::vector<LidarPoint>& points,
                                     const Trajectory& traj, double knot_spacing_m,
                                     const std::string& side) {
  if (knot_spacing_m <= 0) throw ConfigError("knot spacing must be > 0");
  if (points.empty()) throw ConfigError("boundary not found: no candidate points (" + side + ")");
  const double len = traj.length();
  const int n_bins = std::max(1, static_cast<int>(std::ceil(len / knot_spacing_m)));
  std::vector<std::vector<double>> lat_bins(static_cast<std::size_t>(n_bins));
  std::vector<std::vector<double>> z_bins(static_cast<std::size_t>(n_bins));
  for (const LidarPoint& pt : points) {
    const Trajectory::Projection proj = traj.project(pt.x, pt.y);
    const int bi = std::min(n_bins - 1, static_cast<int>(proj.s / knot_spacing_m));
    lat_bins[static_cast<std::size_t>(bi)].push_back(proj.lateral);
    z_bins[static_cast<std::size_t>(bi)].push_back(pt.z);
  }

  int n_empty = 0;
  for (const auto& b : lat_bins)
    if (b.empty()) ++n_empty;
  if (2 * n_empty > n_bins)
    throw ConfigError("boundary not found: " + std::to_string(n_empty) + "/" +
                      std::to_string(n_bins) + " empty bins (" + side + ")");

  std::vector<double> lat(static_cast<std::size_t>(n_bins)), z(static_cast<std::size_t>(n_bins));
  std::vector<bool> have(static_cast<std::size_t>(n_bins), false);
  for (int i = 0; i < n_bins; ++i) {
    if (lat_bins[static_cast<std::size_t>(i)].empty()) continue;
    lat[static_cast<std::size_t>(i)] = detail::median(lat_bins[static_cast<std::size_t>(i)]);
    z[static_cast<std::size_t>(i)] = detail::median(z_bins[static_cast<std::size_t>(i)]);
    have[static_cast<std::size_t>(i)] = true;
  }
  // Fill gaps by linear interpolation, copying at the ends.
  for (int i = 0; i < n_bins; ++i) {
    if (have[static_cast<std::size_t>(i)]) continue;
    int lo = i - 1, hi = i + 1;
    while (lo >= 0 && !have[static_cast<std::size_t>(lo)]) --lo;
    while (hi < n_bins && !have[static_cast<std::size_t>(hi)]) ++hi;
    if (lo < 0 && hi >= n_bins) throw ConfigError("boundary not found: no occupied bins");
    if (lo < 0) {
      lat[static_cast<std::size_t>(i)] = lat[static_cast<std::size_t>(hi)];
      z[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(hi)];
    } else if (hi >= n_bins) {
      lat[static_cast<std::size_t>(i)] = lat[static_cast<std::size_t>(lo)];
      z[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(lo)];
    } else {
      const double t = static_cast<double>(i - lo) / (hi - lo);
      lat[static_cast<std::size_t>(i)] = lat[static_cast<std::size_t>(lo)] +
                                         t * (lat[static_cast<std::size_t>(hi)] -
                                              lat[static_cast<std::size_t>(lo)]);
      z[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(lo)] +
                                       t * (z[static_cast<std::size_t>(hi)] -
                                            z[static_cast<std::size_t>(lo)]);
    }
  }

  BoundaryPolyline out;
  out.side = side;
  out.offset_index = 0;
  for (int i = 0; i < n_bins; ++i) {
    const double s = std::min(len, (i + 0.5) * knot_spacing_m);
    const Trajectory::Frame f = traj.frame_at(s);
    const double d = lat[static_cast<std::size_t>(i)];
    out.points.push_back(
        {f.pos.x + d * f.normal_right.x, f.pos.y + d * f.normal_right.y,
         z[static_cast<std::size_t>(i)]});
    out.arcs.push_back(s);
    out.laterals.push_back(d);
  }
  return out;
}

// Replicates the fitted ego boundaries outward by multiples of the lane
// width (mean lateral separation of the ego pair). Returns boundaries ordered
// left to right, ego pair included.
inline std::vector<BoundaryPolyline> replicate_boundaries(const BoundaryPolyline& left,
                                                          const BoundaryPolyline& right,
                                                          int n_left, int n_right,
                                                          const Trajectory& traj) {
  if (n_left < 0 || n_right < 0) throw ConfigError("lane counts must be >= 0");
  const std::size_t n = std::min(left.laterals.size(), right.laterals.size());
  if (n == 0) throw ConfigError("replicate_boundaries: empty ego boundaries");
  double w = 0;
  for (std::size_t i = 0; i < n; ++i) w += right.laterals[i] - left.laterals[i];
  w /= static_cast<double>(n);
  if (w <= 0) throw ConfigError("replicate_boundaries: non-positive lane width");

  auto offset_copy = [&](const BoundaryPolyline& src, double shift, int index) {
    BoundaryPolyline b;
    b.side = src.side;
    b.offset_index = index;
    for (std::size_t i = 0; i < src.arcs.size(); ++i) {
      const double d = src.laterals[i] + shift;
      const Trajectory::Frame f = traj.frame_at(src.arcs[i]);
      b.points.push_back({f.pos.x + d * f.normal_right.x, f.pos.y + d * f.normal_right.y,
                          src.points[i].z});
      b.arcs.push_back(src.arcs[i]);
      b.laterals.push_back(d);
    }
    return b;
  };

  std::vector<BoundaryPolyline> out;
  for (int k = n_left; k >= 1; --k) out.push_back(offset_copy(left, -k * w, k));
  out.push_back(left);
  out.push_back(right);
  for (int k = 1; k <= n_right; ++k) out.push_back(offset_copy(right, k * w, k));
  return out;
}

// Knot override hook standing in for manual correction of merge/split cases:
// entries replace individual knots of a fitted boundary.
struct KnotCorrection {
  int boundary_id = 0;
  int knot_index = 0;
  Vec3 position;
};

inline void apply_corrections(std::vector<BoundaryPolyline>& boundaries,
                              const std::vector<KnotCorrection>& corrections) {
  for (const KnotCorrection& c : corrections) {
    bool found = false;
    for (BoundaryPolyline& b : boundaries) {
      if (b.boundary_id() != c.boundary_id) continue;
      if (c.knot_index < 0 || c.knot_index >= static_cast<int>(b.points.size()))
        throw ConfigError("correction knot index out of range");
      b.points[static_cast<std::size_t>(c.knot_index)] = c.position;
      found = true;
    }
    if (!found)
      throw ConfigError("correction references unknown boundary id " +
                        std::to_string(c.boundary_id));
  }
}

// Oriented box on the road, used for synthetic vehicles and occlusion tests.
struct Cuboid {
  Vec3 center;  // map frame; z is the box center height
  double length = 4.0, width = 1.9, height = 1.4;
  double heading = 0;
};

namespace detail {

// Slab test in the cuboid's local frame; returns entry distance or nothing.
inline std::optional<double> ray_cuboid(const Vec3& origin, const Vec3& dir, const Cuboid& box) {
  const double c = std::cos(box.heading), s = std::sin(box.heading);
  auto to_local = [&](const Vec3& p) {
    const Vec3 d = p - box.center;
    return Vec3{c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
  };
  const Vec3 o = to_local(origin);
  const Vec3 d{c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};
  const double half[3] = {box.length / 2, box.width / 2, box.height / 2};
  const double po[3] = {o.x, o.y, o.z};
  const double pd[3] = {d.x, d.y, d.z};
  double t0 = 0, t1 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(pd[i]) < 1e-12) {
      if (std::abs(po[i]) > half[i]) return std::nullopt;
      continue;
    }
    double a = (-half[i] - po[i]) / pd[i];
    double b = (half[i] - po[i]) / pd[i];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

inline Vec3 map_to_vehicle(const Vec3& p, const Pose& pose) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  const double dx = p.x - pose.x, dy = p.y - pose.y;
  return {c * dx + s * dy, -s * dx + c * dy, p.z - pose.z};
}

}  // namespace detail

struct FrameTruth {
  std::vector<LaneAnnotation> lanes;
  std::vector<VehicleBox> vehicles;
};

// Projects map-frame boundaries and vehicle cuboids into one frame.
// Boundary knots behind the camera are culled; knots whose view ray is
// interrupted by a cuboid stay in the label with an occlusion flag.
inline FrameTruth project_labels(const std::vector<BoundaryPolyline>& boundaries,
                                 const std::vector<Cuboid>& vehicles, const Pose& pose,
                                 const CameraModel& cam, int img_w, int img_h) {
  FrameTruth out;
  const Vec3 cam_origin{0, 0, cam.height};
  const double margin = 2.0 * std::max(img_w, img_h);

  for (const BoundaryPolyline& b : boundaries) {
    LaneAnnotation ann;
    ann.boundary_id = b.boundary_id();
    for (const Vec3& p_map : b.points) {
      const Vec3 p = detail::map_to_vehicle(p_map, pose);
      const auto px = project(p, cam);
      if (!px || px->depth < 0.5) continue;
      if (px->u < -margin || px->u > img_w + margin || px->v < -margin ||
          px->v > img_h + margin)
        continue;
      bool occluded = false;
      const Vec3 dir = p - cam_origin;
      for (const Cuboid& veh : vehicles) {
        Cuboid local = veh;
        local.center = detail::map_to_vehicle(veh.center, pose);
        local.heading = veh.heading - pose.heading;
        const auto t = detail::ray_cuboid(cam_origin, dir, local);
        if (t && *t > 0 && *t < 1.0 - 1e-9) {
          occluded = true;
          break;
        }
      }
      ann.knots.push_back({px->u, px->v, px->depth});
      ann.occluded.push_back(occluded ? 1 : 0);
    }
    if (ann.knots.size() >= 2) out.lanes.push_back(std::move(ann));
  }

  for (const Cuboid& veh : vehicles) {
    Cuboid local = veh;
    local.center = detail::map_to_vehicle(veh.center, pose);
    local.heading = veh.heading - pose.heading;
    if (local.center.x - local.length / 2 < 1.0) continue;  // at or behind the ego
    const double c = std::cos(local.heading), s = std::sin(local.heading);
    Rect box{1e30, 1e30, -1e30, -1e30};
    bool all_visible = true;
    for (int i = 0; i < 8; ++i) {
      const double lx = (i & 1 ? 0.5 : -0.5) * local.length;
      const double ly = (i & 2 ? 0.5 : -0.5) * local.width;
      const double lz = (i & 4 ? 0.5 : -0.5) * local.height;
      const Vec3 corner{local.center.x + c * lx - s * ly, local.center.y + s * lx + c * ly,
                        local.center.z + lz};
      const auto px = project(corner, cam);
      if (!px) {
        all_visible = false;
        break;
      }
      box.x1 = std::min(box.x1, px->u);
      box.y1 = std::min(box.y1, px->v);
      box.x2 = std::max(box.x2, px->u);
      box.y2 = std::max(box.y2, px->v);
    }
    if (!all_visible) continue;
    box = intersect(box, {0, 0, static_cast<double>(img_w), static_cast<double>(img_h)});
    if (!box.valid()) continue;
    // Depth reference: center of the face toward the camera.
    const Vec3 rear{local.center.x - c * 0.5 * local.length,
                    local.center.y - s * 0.5 * local.length, local.center.z};
    const auto rear_px = project(rear, cam);
    if (!rear_px) continue;
    out.vehicles.push_back({box, rear_px->depth, 1.0});
  }
  return out;
}

}  // namespace hpk
