#pragma once

#include <optional>

#include "hpk/common.hpp"

namespace hpk {

// Pinhole camera looking forward from the vehicle. Vehicle frame: x forward,
// y left, z up, origin on the ground below the camera. The camera sits at
// height `height` and is pitched down by `pitch` radians. Depth values are
// measured along the optical axis.
struct CameraModel {
  double focal = 350;     // pixels
  double cu = 320;        // principal point, pixels
  double cv = 240;
  double height = 1.2;    // meters above ground
  double pitch = 0.0;     // radians, positive = nose down

  void validate() const {
    if (focal <= 0) throw ConfigError("camera focal must be > 0");
    if (height <= 0) throw ConfigError("camera height must be > 0");
  }
};

struct PixelDepth {
  double u = 0, v = 0;
  double depth = 0;  // meters along the optical axis
};

// Camera-frame coordinates (x right, y down, z along the optical axis) of a
// vehicle-frame point.
inline Vec3 to_camera_frame(const Vec3& p, const CameraModel& cam) {
  const double s = std::sin(cam.pitch), c = std::cos(cam.pitch);
  const Vec3 d{p.x, p.y, p.z - cam.height};
  return {-d.y, -s * d.x - c * d.z, c * d.x - s * d.z};
}

// Projects a vehicle-frame point; empty if it lies behind the image plane.
inline std::optional<PixelDepth> project(const Vec3& p, const CameraModel& cam) {
  const Vec3 q = to_camera_frame(p, cam);
  if (q.z <= 1e-9) return std::nullopt;
  return PixelDepth{cam.cu + cam.focal * q.x / q.z, cam.cv + cam.focal * q.y / q.z, q.z};
}

// Inverse perspective mapping: places a pixel at the given optical-axis depth
// in the vehicle frame. With per-point depth no ground-plane assumption is
// needed.
inline Vec3 ipm_to_3d(double u, double v, double depth, const CameraModel& cam) {
  if (depth <= 0) throw ConfigError("ipm_to_3d requires depth > 0");
  const double x = (u - cam.cu) / cam.focal * depth;
  const double y = (v - cam.cv) / cam.focal * depth;
  const double s = std::sin(cam.pitch), c = std::cos(cam.pitch);
  // Inverse of to_camera_frame: p = x*right + y*down + depth*forward + origin.
  return {-s * y + c * depth, -x, cam.height - c * y - s * depth};
}

inline Vec3 ipm_to_3d(const Vec2& pixel, double depth, const CameraModel& cam) {
  return ipm_to_3d(pixel.x, pixel.y, depth, cam);
}

}  // namespace hpk
