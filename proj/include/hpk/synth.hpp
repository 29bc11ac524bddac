#pragma once

#include <random>
#include <vector>

#include "hpk/autolabel.hpp"
#include "hpk/image.hpp"

namespace hpk {

// Synthetic highway scene: constant-curvature road, painted boundaries,
// cuboid vehicles, a lidar-style point cloud and raycast camera frames with
// exact ground truth. Stands in for recorded data in every test.
struct SynthConfig {
  int n_frames = 6;
  double frame_spacing_m = 8.0;
  double road_length_m = 250.0;
  double curvature = 0.0;  // 1/m; positive bends left
  double lane_width_m = 3.6;
  int lanes_left = 1, lanes_right = 1;
  int n_vehicles = 3;
  double vehicle_min_dist_m = 12.0;
  double paint_spacing_m = 0.15;
  double paint_halfwidth_m = 0.08;
  double paint_noise_m = 0.0;  // lateral jitter on paint returns
  int road_points = 4000;
  int sign_posts = 2;
  double traj_step_m = 2.0;
  double gt_step_m = 2.0;
  double gt_max_dist_m = 90.0;
  // Drop ground-truth boxes whose shrunk core cannot cover a single mask
  // cell; such annotations are below the detector's resolvable size.
  bool drop_subcell_boxes = true;

  void validate() const {
    if (n_frames < 1) throw ConfigError("synth needs n_frames >= 1");
    if (road_length_m < 20) throw ConfigError("synth road too short");
    if (lane_width_m <= 2.8 || lane_width_m >= 4.4)
      throw ConfigError("synth lane width must keep paint inside the (1.4, 2.2) m band");
    if (std::abs(curvature) > 1.0 / 150.0)
      throw ConfigError("synth curvature too sharp for a highway scene");
  }
};

// Arc-length road frame. The centerline follows the ego lane center.
struct RoadModel {
  double curvature = 0;

  Vec2 position(double s) const {
    if (std::abs(curvature) < 1e-12) return {s, 0};
    return {std::sin(curvature * s) / curvature, (1 - std::cos(curvature * s)) / curvature};
  }
  double heading(double s) const { return curvature * s; }
  Vec2 normal_right(double s) const {
    const double h = heading(s);
    return {std::sin(h), -std::cos(h)};
  }
  Vec2 at(double s, double lateral) const {
    const Vec2 p = position(s);
    const Vec2 n = normal_right(s);
    return {p.x + lateral * n.x, p.y + lateral * n.y};
  }
  // Inverse mapping; valid while |lateral| < turn radius.
  void locate(double x, double y, double& s, double& lateral) const {
    if (std::abs(curvature) < 1e-12) {
      s = x;
      lateral = -y;
      return;
    }
    const double R = 1.0 / curvature;
    const double rx = x, ry = y - R;
    const double rho = (R > 0 ? 1.0 : -1.0) * std::hypot(rx, ry);
    lateral = rho - R;
    s = std::atan2(rx / rho, -ry / rho) / curvature;
  }
};

struct SynthScene {
  SynthConfig config;
  RoadModel road;
  std::vector<LidarPoint> cloud;
  Trajectory trajectory;
  std::vector<Cuboid> vehicles;              // map frame, static through the scene
  std::vector<BoundaryPolyline> boundaries;  // exact truth
  std::vector<double> boundary_offsets;      // signed lateral of each boundary
  std::vector<Pose> frame_poses;
  std::vector<ImageU8> images;
  std::vector<FrameTruth> truth;
};

namespace detail {

// Small integer hash for deterministic surface mottling.
inline std::uint32_t hash2(std::int32_t x, std::int32_t y) {
  std::uint32_t h = static_cast<std::uint32_t>(x) * 0x9e3779b1u ^
                    static_cast<std::uint32_t>(y) * 0x85ebca77u;
  h ^= h >> 13;
  h *= 0xc2b2ae35u;
  return h ^ (h >> 16);
}

struct Rgb {
  std::uint8_t r, g, b;
};

}  // namespace detail

inline ImageU8 render_frame(const SynthScene& scene, const Pose& pose, const CameraModel& cam,
                            int img_w, int img_h) {
  ImageU8 img(img_w, img_h);
  const double cs = std::cos(pose.heading), sn = std::sin(pose.heading);
  const double pitch_s = std::sin(cam.pitch), pitch_c = std::cos(cam.pitch);

  // Cuboids in the vehicle frame of this pose.
  std::vector<Cuboid> local = scene.vehicles;
  for (Cuboid& v : local) {
    const double dx = v.center.x - pose.x, dy = v.center.y - pose.y;
    v.center = {cs * dx + sn * dy, -sn * dx + cs * dy, v.center.z - pose.z};
    v.heading -= pose.heading;
  }

  const Vec3 origin{0, 0, cam.height};
  const double road_half =
      (0.5 + std::max(scene.config.lanes_left, scene.config.lanes_right)) *
          scene.config.lane_width_m +
      0.6;

  for (int py = 0; py < img_h; ++py) {
    for (int px = 0; px < img_w; ++px) {
      const double xc = (px + 0.5 - cam.cu) / cam.focal;
      const double yc = (py + 0.5 - cam.cv) / cam.focal;
      // Camera ray into the vehicle frame (x fwd, y left, z up).
      const Vec3 dir{-pitch_s * yc + pitch_c, -xc, -pitch_c * yc - pitch_s};

      double t_veh = std::numeric_limits<double>::infinity();
      int veh_idx = -1;
      for (std::size_t i = 0; i < local.size(); ++i) {
        if (local[i].center.x - local[i].length / 2 < 1.0) continue;  // at or behind the ego
        const auto t = detail::ray_cuboid(origin, dir, local[i]);
        if (t && *t > 1e-6 && *t < t_veh) {
          t_veh = *t;
          veh_idx = static_cast<int>(i);
        }
      }
      const double t_ground = dir.z < -1e-9 ? -origin.z / dir.z : std::numeric_limits<double>::infinity();

      detail::Rgb color{140, 170, 205};  // sky
      if (py > 0) {  // slight vertical sky gradient
        color.r = static_cast<std::uint8_t>(130 + 30 * py / img_h);
        color.g = static_cast<std::uint8_t>(160 + 25 * py / img_h);
      }
      if (veh_idx >= 0 && t_veh < t_ground) {
        const Cuboid& v = local[static_cast<std::size_t>(veh_idx)];
        const Vec3 hit = origin + t_veh * dir;
        const double lc = std::cos(v.heading), ls = std::sin(v.heading);
        const double hx = lc * (hit.x - v.center.x) + ls * (hit.y - v.center.y);
        const double hz = hit.z - v.center.z;
        // Deterministic body color per vehicle, shaded by face.
        const std::uint32_t base = detail::hash2(veh_idx * 7 + 3, 11);
        double shade = 1.0;
        if (hz > 0.49 * v.height) shade = 1.25;                    // roof
        else if (hx < -0.49 * v.length) shade = 0.8;               // face toward camera
        auto ch = [&](int sh, int lo) {
          const double c0 = lo + ((base >> sh) & 0x3f);
          return static_cast<std::uint8_t>(std::clamp(c0 * shade, 0.0, 255.0));
        };
        color = {ch(0, 90), ch(6, 60), ch(12, 60)};
      } else if (std::isfinite(t_ground)) {
        const Vec3 hit = origin + t_ground * dir;
        const double mx = pose.x + cs * hit.x - sn * hit.y;
        const double my = pose.y + sn * hit.x + cs * hit.y;
        double s, lat;
        scene.road.locate(mx, my, s, lat);
        const std::uint32_t n = detail::hash2(static_cast<std::int32_t>(mx * 7),
                                              static_cast<std::int32_t>(my * 7));
        if (s >= 0 && s <= scene.config.road_length_m && std::abs(lat) <= road_half) {
          bool paint = false;
          for (double off : scene.boundary_offsets)
            if (std::abs(lat - off) <= scene.config.paint_halfwidth_m) paint = true;
          if (paint) {
            const std::uint8_t v = static_cast<std::uint8_t>(225 + (n & 0xf));
            color = {v, v, v};
          } else {
            const std::uint8_t v = static_cast<std::uint8_t>(62 + (n & 0x1f));
            color = {v, v, v};
          }
        } else {
          color = {static_cast<std::uint8_t>(55 + (n & 0xf)),
                   static_cast<std::uint8_t>(105 + (n & 0x1f)),
                   static_cast<std::uint8_t>(50 + (n & 0xf))};
        }
      }
      std::uint8_t* out = img.px(px, py);
      out[0] = color.r;
      out[1] = color.g;
      out[2] = color.b;
    }
  }
  return img;
}

inline SynthScene synth_scene(const SynthConfig& cfg, const CameraModel& cam, int img_w,
                              int img_h, std::uint64_t seed) {
  cfg.validate();
  cam.validate();
  SynthScene scene;
  scene.config = cfg;
  scene.road.curvature = cfg.curvature;
  std::mt19937_64 rng(seed ^ 0x5e11a9u);

  const double w = cfg.lane_width_m;
  for (int k = cfg.lanes_left; k >= 0; --k) scene.boundary_offsets.push_back(-w / 2 - k * w);
  for (int k = 0; k <= cfg.lanes_right; ++k) scene.boundary_offsets.push_back(w / 2 + k * w);

  // Trajectory along the ego lane center.
  for (double s = 0; s <= cfg.road_length_m + 1e-9; s += cfg.traj_step_m) {
    const Vec2 p = scene.road.position(s);
    scene.trajectory.poses.push_back({s / 25.0, p.x, p.y, 0.0, scene.road.heading(s)});
  }
  scene.trajectory.build();

  // Exact boundary truth.
  for (std::size_t bi = 0; bi < scene.boundary_offsets.size(); ++bi) {
    const double off = scene.boundary_offsets[bi];
    BoundaryPolyline b;
    b.side = off < 0 ? "left" : "right";
    b.offset_index = static_cast<int>(std::lround(std::abs(off) / w - 0.5));
    for (double s = 0; s <= cfg.road_length_m + 1e-9; s += cfg.gt_step_m) {
      const Vec2 p = scene.road.at(s, off);
      b.points.push_back({p.x, p.y, 0.0});
      b.arcs.push_back(s);
      b.laterals.push_back(off);
    }
    scene.boundaries.push_back(std::move(b));
  }

  // Point cloud: paint returns along every boundary, dim road surface
  // returns, plus a few elevated sign posts near the paint band.
  for (double off : scene.boundary_offsets) {
    for (double s = 0; s <= cfg.road_length_m; s += cfg.paint_spacing_m) {
      const double jit = cfg.paint_noise_m > 0 ? uniform(rng, -cfg.paint_noise_m, cfg.paint_noise_m) : 0.0;
      const Vec2 p = scene.road.at(s + uniform(rng, 0.0, cfg.paint_spacing_m * 0.5), off + jit);
      scene.cloud.push_back({p.x, p.y, uniform(rng, -0.01, 0.01), uniform(rng, 175.0, 250.0)});
    }
  }
  const double road_half = (0.5 + std::max(cfg.lanes_left, cfg.lanes_right)) * w;
  for (int i = 0; i < cfg.road_points; ++i) {
    const double s = uniform(rng, 0.0, cfg.road_length_m);
    const double lat = uniform(rng, -road_half, road_half);
    const Vec2 p = scene.road.at(s, lat);
    scene.cloud.push_back({p.x, p.y, uniform(rng, -0.02, 0.02), uniform(rng, 15.0, 70.0)});
  }
  for (int i = 0; i < cfg.sign_posts; ++i) {
    const double s = uniform(rng, 20.0, cfg.road_length_m - 10.0);
    const double lat = (i % 2 == 0 ? 1.0 : -1.0) * uniform(rng, 1.5, 2.1);
    const Vec2 p = scene.road.at(s, lat);
    for (int j = 0; j < 12; ++j)
      scene.cloud.push_back({p.x + uniform(rng, -0.03, 0.03), p.y + uniform(rng, -0.03, 0.03),
                             uniform(rng, 0.8, 2.2), uniform(rng, 180.0, 255.0)});
  }

  // Vehicles ahead in random lanes; ego lane used sparingly so the ego
  // boundaries stay mostly visible.
  const double usable = cfg.road_length_m - 25.0 - cfg.vehicle_min_dist_m;
  for (int i = 0; i < cfg.n_vehicles; ++i) {
    const double s = cfg.vehicle_min_dist_m +
                     (cfg.n_vehicles == 1 ? 0.5 : static_cast<double>(i) / (cfg.n_vehicles - 1)) *
                         usable +
                     uniform(rng, -3.0, 3.0);
    int lane_slot;
    if (cfg.lanes_left == 0 && cfg.lanes_right == 0) {
      lane_slot = 0;
    } else if (i % 3 == 2) {
      lane_slot = 0;
    } else {
      const int side = (i % 2 == 0) ? 1 : -1;
      lane_slot = side > 0 ? (cfg.lanes_right > 0 ? 1 : -1) : (cfg.lanes_left > 0 ? -1 : 1);
    }
    const double lat = lane_slot * w + uniform(rng, -0.25, 0.25);
    Cuboid v;
    const Vec2 p = scene.road.at(s, lat);
    v.length = uniform(rng, 3.9, 4.6);
    v.width = uniform(rng, 1.75, 2.0);
    v.height = uniform(rng, 1.25, 1.55);
    v.center = {p.x, p.y, v.height / 2};
    v.heading = scene.road.heading(s);
    scene.vehicles.push_back(v);
  }

  // Frames: advance the ego along the lane center; prune labels to the
  // configured forward range before projecting.
  for (int f = 0; f < cfg.n_frames; ++f) {
    const double s = f * cfg.frame_spacing_m;
    const Vec2 p = scene.road.position(s);
    Pose pose{s / 25.0, p.x, p.y, 0.0, scene.road.heading(s)};
    scene.frame_poses.push_back(pose);

    std::vector<BoundaryPolyline> windowed;
    for (const BoundaryPolyline& b : scene.boundaries) {
      BoundaryPolyline wv;
      wv.side = b.side;
      wv.offset_index = b.offset_index;
      for (std::size_t i = 0; i < b.points.size(); ++i) {
        if (b.arcs[i] < s - 5.0 || b.arcs[i] > s + cfg.gt_max_dist_m) continue;
        wv.points.push_back(b.points[i]);
        wv.arcs.push_back(b.arcs[i]);
        wv.laterals.push_back(b.laterals[i]);
      }
      if (wv.points.size() >= 2) windowed.push_back(std::move(wv));
    }
    FrameTruth truth = project_labels(windowed, scene.vehicles, pose, cam, img_w, img_h);
    if (cfg.drop_subcell_boxes) {
      std::erase_if(truth.vehicles,
                    [](const VehicleBox& b) { return !shrunk_box_covers_cell(b.rect); });
    }
    scene.truth.push_back(std::move(truth));
    scene.images.push_back(render_frame(scene, pose, cam, img_w, img_h));
  }
  return scene;
}

}  // namespace hpk
