#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "hpk/camera.hpp"
#include "hpk/detect.hpp"

namespace hpk {

struct MergeParams {
  double eps = 0.2;   // relative corner tolerance
  int min_group = 2;  // clusters smaller than this are dropped

  void validate() const {
    if (eps < 0) throw ConfigError("merge eps must be >= 0");
    if (min_group < 1) throw ConfigError("merge min_group must be >= 1");
  }
};

struct Candidates {
  std::vector<VehicleBox> vehicles;
  std::vector<LaneSegmentDet> lanes;
};

// One decoded candidate per cell whose class probability clears `threshold`
// and whose argmax is not background; score = that class probability.
inline Candidates extract_candidates(const DetectionGrid& grid, double threshold = 0.5) {
  Candidates out;
  const std::size_t n = static_cast<std::size_t>(grid.w) * grid.h;
  for (std::size_t ci = 0; ci < n; ++ci) {
    const float* p = grid.prob.data() + ci * kNumClasses;
    int best = 0;
    for (int k = 1; k < kNumClasses; ++k)
      if (p[k] > p[best]) best = k;
    if (best == static_cast<int>(CellClass::background)) continue;
    if (static_cast<double>(p[best]) <= threshold) continue;
    if (best == static_cast<int>(CellClass::vehicle)) {
      const float* v = grid.veh.data() + ci * kVehicleDims;
      VehicleBox b;
      b.rect = {std::min(v[0], v[2]), std::min(v[1], v[3]), std::max(v[0], v[2]),
                std::max(v[1], v[3])};
      b.depth = v[4];
      b.score = p[best];
      out.vehicles.push_back(b);
    } else {
      const float* s = grid.lane.data() + ci * kLaneDims;
      LaneSegmentDet seg;
      seg.a = {s[0], s[1]};
      seg.b = {s[2], s[3]};
      seg.depth_a = s[4];
      seg.depth_b = s[5];
      seg.score = p[best];
      if (sq(seg.a.x - seg.b.x) + sq(seg.a.y - seg.b.y) < 1e-12) continue;  // degenerate
      if (seg.depth_a > seg.depth_b) {
        std::swap(seg.a, seg.b);
        std::swap(seg.depth_a, seg.depth_b);
      }
      out.lanes.push_back(seg);
    }
  }
  return out;
}

namespace detail {

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Two boxes are similar when every corner coordinate differs by at most
// eps times the mean side length of the pair.
inline bool similar_boxes(const VehicleBox& a, const VehicleBox& b, double eps) {
  const double tol =
      eps * 0.25 * (a.rect.width() + a.rect.height() + b.rect.width() + b.rect.height());
  return std::abs(a.rect.x1 - b.rect.x1) <= tol && std::abs(a.rect.y1 - b.rect.y1) <= tol &&
         std::abs(a.rect.x2 - b.rect.x2) <= tol && std::abs(a.rect.y2 - b.rect.y2) <= tol;
}

}  // namespace detail

// O(n^2) similarity clustering with transitive closure. Clusters below
// min_group are discarded; survivors merge to the per-coordinate mean with
// depth averaged and score taken as the cluster maximum.
inline std::vector<VehicleBox> merge_boxes(const std::vector<VehicleBox>& boxes,
                                           const MergeParams& params) {
  params.validate();
  const std::size_t n = boxes.size();
  if (n == 0) return {};
  detail::UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (detail::similar_boxes(boxes[i], boxes[j], params.eps))
        uf.unite(static_cast<int>(i), static_cast<int>(j));

  std::vector<int> count(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++count[static_cast<std::size_t>(uf.find(static_cast<int>(i)))];

  std::vector<VehicleBox> out;
  std::vector<int> root_slot(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const int r = uf.find(static_cast<int>(i));
    if (count[static_cast<std::size_t>(r)] < params.min_group) continue;
    if (root_slot[static_cast<std::size_t>(r)] < 0) {
      root_slot[static_cast<std::size_t>(r)] = static_cast<int>(out.size());
      out.push_back({{0, 0, 0, 0}, 0, 0});
    }
    VehicleBox& m = out[static_cast<std::size_t>(root_slot[static_cast<std::size_t>(r)])];
    const double inv = 1.0 / count[static_cast<std::size_t>(r)];
    m.rect.x1 += boxes[i].rect.x1 * inv;
    m.rect.y1 += boxes[i].rect.y1 * inv;
    m.rect.x2 += boxes[i].rect.x2 * inv;
    m.rect.y2 += boxes[i].rect.y2 * inv;
    m.depth += boxes[i].depth * inv;
    m.score = std::max(m.score, boxes[i].score);
  }
  return out;
}

// Standard DBSCAN over 3D points. Returns one label per point, -1 for noise;
// cluster ids are assigned in order of first discovery.
inline std::vector<int> dbscan(const std::vector<Vec3>& pts, double eps, int min_pts) {
  if (eps < 0) throw ConfigError("dbscan eps must be >= 0");
  if (min_pts < 1) throw ConfigError("dbscan min_pts must be >= 1");
  const int n = static_cast<int>(pts.size());
  constexpr int kUndef = -2, kNoise = -1;
  std::vector<int> label(static_cast<std::size_t>(n), kUndef);
  const double eps2 = eps * eps;

  auto neighbors = [&](int i) {
    std::vector<int> out;
    for (int j = 0; j < n; ++j) {
      const double d2 = sq(pts[i].x - pts[j].x) + sq(pts[i].y - pts[j].y) + sq(pts[i].z - pts[j].z);
      if (d2 <= eps2) out.push_back(j);
    }
    return out;
  };

  int cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (label[static_cast<std::size_t>(i)] != kUndef) continue;
    std::vector<int> seed = neighbors(i);
    if (static_cast<int>(seed.size()) < min_pts) {
      label[static_cast<std::size_t>(i)] = kNoise;
      continue;
    }
    const int c = cluster++;
    label[static_cast<std::size_t>(i)] = c;
    for (std::size_t k = 0; k < seed.size(); ++k) {
      const int j = seed[k];
      if (label[static_cast<std::size_t>(j)] == kNoise) label[static_cast<std::size_t>(j)] = c;
      if (label[static_cast<std::size_t>(j)] != kUndef) continue;
      label[static_cast<std::size_t>(j)] = c;
      std::vector<int> nb = neighbors(j);
      if (static_cast<int>(nb.size()) >= min_pts)
        seed.insert(seed.end(), nb.begin(), nb.end());
    }
  }
  return label;
}

// Detected lane after clustering: ordered segments, shared knots in image
// space (u, v, depth) and the lifted 3D polyline in the vehicle frame.
struct Lane {
  int id = 0;
  std::vector<LaneSegmentDet> segments;
  std::vector<Vec3> knots_px;    // (u, v, depth)
  std::vector<Vec3> polyline3d;  // vehicle frame, meters
};

// Orders a cluster of segments by depth and joins consecutive endpoints into
// shared knots, yielding a connected polyline.
inline Lane link_spline(std::vector<LaneSegmentDet> segments, const CameraModel& cam) {
  if (segments.empty()) throw ConfigError("link_spline on empty cluster");
  for (LaneSegmentDet& s : segments) {
    if (s.depth_a > s.depth_b) {
      std::swap(s.a, s.b);
      std::swap(s.depth_a, s.depth_b);
    }
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const LaneSegmentDet& a, const LaneSegmentDet& b) {
                     return a.depth_a + a.depth_b < b.depth_a + b.depth_b;
                   });

  Lane lane;
  lane.knots_px.push_back({segments.front().a.x, segments.front().a.y, segments.front().depth_a});
  for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
    const LaneSegmentDet& cur = segments[i];
    const LaneSegmentDet& nxt = segments[i + 1];
    lane.knots_px.push_back({0.5 * (cur.b.x + nxt.a.x), 0.5 * (cur.b.y + nxt.a.y),
                             0.5 * (cur.depth_b + nxt.depth_a)});
  }
  lane.knots_px.push_back({segments.back().b.x, segments.back().b.y, segments.back().depth_b});
  for (const Vec3& k : lane.knots_px)
    lane.polyline3d.push_back(ipm_to_3d(k.x, k.y, std::max(k.z, 1e-6), cam));
  lane.segments = std::move(segments);
  return lane;
}

struct LaneClusterParams {
  double eps = 2.0;               // meters in 3D space, pixels in image space
  int min_pts = 3;
  std::string space = "3d";       // "3d" or "pixel"

  void validate() const {
    if (space != "3d" && space != "pixel")
      throw ConfigError("lane cluster space must be '3d' or 'pixel'");
  }
};

// Clusters detected segments into lanes (DBSCAN over segment midpoints) and
// links each cluster into a polyline. Noise segments are discarded.
inline std::vector<Lane> cluster_lanes(const std::vector<LaneSegmentDet>& segments,
                                       const CameraModel& cam,
                                       const LaneClusterParams& params) {
  params.validate();
  std::vector<Vec3> mids;
  mids.reserve(segments.size());
  for (const LaneSegmentDet& s : segments) {
    if (params.space == "pixel") {
      mids.push_back({0.5 * (s.a.x + s.b.x), 0.5 * (s.a.y + s.b.y), 0.0});
    } else {
      const Vec3 a = ipm_to_3d(s.a.x, s.a.y, std::max(s.depth_a, 1e-6), cam);
      const Vec3 b = ipm_to_3d(s.b.x, s.b.y, std::max(s.depth_b, 1e-6), cam);
      mids.push_back(0.5 * (a + b));
    }
  }
  const std::vector<int> labels = dbscan(mids, params.eps, params.min_pts);
  int n_clusters = 0;
  for (int l : labels) n_clusters = std::max(n_clusters, l + 1);

  std::vector<Lane> lanes;
  for (int c = 0; c < n_clusters; ++c) {
    std::vector<LaneSegmentDet> cluster;
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (labels[i] == c) cluster.push_back(segments[i]);
    if (cluster.empty()) continue;
    Lane lane = link_spline(std::move(cluster), cam);
    lane.id = static_cast<int>(lanes.size());
    lanes.push_back(std::move(lane));
  }
  return lanes;
}

}  // namespace hpk
