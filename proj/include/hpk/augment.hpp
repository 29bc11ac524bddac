#pragma once

#include <array>
#include <random>

#include "hpk/dataset.hpp"
#include "hpk/image.hpp"

namespace hpk {

struct Mat3 {
  // Row-major 3x3.
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }

  static Mat3 translation(double dx, double dy) {
    Mat3 t;
    t.m = {1, 0, dx, 0, 1, dy, 0, 0, 1};
    return t;
  }

  Vec2 apply(const Vec2& p) const {
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    if (std::abs(w) < 1e-12) throw NumericError("homography maps point to infinity");
    return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
  }
};

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a.m[static_cast<std::size_t>(3 * i + k)] * b.m[static_cast<std::size_t>(3 * k + j)];
      r.m[static_cast<std::size_t>(3 * i + j)] = s;
    }
  return r;
}

inline Mat3 inverse(const Mat3& a) {
  const auto& m = a.m;
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  if (std::abs(det) < 1e-12) throw ConfigError("homography is not invertible");
  const double inv = 1.0 / det;
  Mat3 r;
  r.m = {(m[4] * m[8] - m[5] * m[7]) * inv, (m[2] * m[7] - m[1] * m[8]) * inv,
         (m[1] * m[5] - m[2] * m[4]) * inv, (m[5] * m[6] - m[3] * m[8]) * inv,
         (m[0] * m[8] - m[2] * m[6]) * inv, (m[2] * m[3] - m[0] * m[5]) * inv,
         (m[3] * m[7] - m[4] * m[6]) * inv, (m[1] * m[6] - m[0] * m[7]) * inv,
         (m[0] * m[4] - m[1] * m[3]) * inv};
  return r;
}

// Homography mapping four source points onto four destination points (direct
// linear solve of the 8x8 system).
inline Mat3 homography_from_corners(const std::array<Vec2, 4>& src,
                                    const std::array<Vec2, 4>& dst) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = src[static_cast<std::size_t>(i)].x, y = src[static_cast<std::size_t>(i)].y;
    const double u = dst[static_cast<std::size_t>(i)].x, v = dst[static_cast<std::size_t>(i)].y;
    double* r1 = a[2 * i];
    double* r2 = a[2 * i + 1];
    r1[0] = x; r1[1] = y; r1[2] = 1; r1[6] = -u * x; r1[7] = -u * y; r1[8] = u;
    r2[3] = x; r2[4] = y; r2[5] = 1; r2[6] = -v * x; r2[7] = -v * y; r2[8] = v;
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12)
      throw ConfigError("degenerate corner correspondence for homography");
    if (pivot != col)
      for (int c = 0; c < 9; ++c) std::swap(a[pivot][c], a[col][c]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Mat3 h;
  for (int i = 0; i < 8; ++i) h.m[static_cast<std::size_t>(i)] = a[i][8] / a[i][i];
  h.m[8] = 1;
  return h;
}

// The fixed distortion family used for training augmentation: per-corner
// displacements expressed as fractions of the image width
// (order: top-left, top-right, bottom-right, bottom-left).
using CornerOffsets = std::array<Vec2, 4>;

inline std::array<CornerOffsets, 7> default_perspective_presets() {
  return {{
      {{{+0.025, 0}, {-0.025, 0}, {0, 0}, {0, 0}}},          // top edge in
      {{{-0.025, 0}, {+0.025, 0}, {0, 0}, {0, 0}}},          // top edge out
      {{{+0.05, 0}, {-0.05, 0}, {0, 0}, {0, 0}}},
      {{{-0.05, 0}, {+0.05, 0}, {0, 0}, {0, 0}}},
      {{{+0.075, 0}, {-0.075, 0}, {0, 0}, {0, 0}}},
      {{{-0.075, 0}, {+0.075, 0}, {0, 0}, {0, 0}}},
      {{{+0.05, +0.02}, {-0.05, +0.02}, {+0.025, -0.01}, {-0.025, -0.01}}},  // combined
  }};
}

inline Mat3 perspective_preset(int k, int img_w, int img_h,
                               const std::array<CornerOffsets, 7>& presets =
                                   default_perspective_presets()) {
  if (k < 0 || k >= 7) throw ConfigError("perspective preset index must be in [0, 7)");
  const double w = img_w, h = img_h;
  const std::array<Vec2, 4> src{{{0, 0}, {w, 0}, {w, h}, {0, h}}};
  std::array<Vec2, 4> dst = src;
  for (int i = 0; i < 4; ++i) {
    dst[static_cast<std::size_t>(i)].x += presets[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)].x * w;
    dst[static_cast<std::size_t>(i)].y += presets[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)].y * w;
  }
  return homography_from_corners(src, dst);
}

// Bilinear warp with inverse mapping; pixels sampling outside the source
// image are black.
inline ImageU8 warp_image(const ImageU8& src, const Mat3& h) {
  const Mat3 inv = inverse(h);
  ImageU8 out(src.w, src.h);
  for (int y = 0; y < src.h; ++y) {
    for (int x = 0; x < src.w; ++x) {
      const Vec2 p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const int x0 = static_cast<int>(std::floor(p.x));
      const int y0 = static_cast<int>(std::floor(p.y));
      if (x0 < -1 || y0 < -1 || x0 > src.w - 1 || y0 > src.h - 1) continue;
      const double fx = p.x - x0, fy = p.y - y0;
      std::uint8_t* dst = out.px(x, y);
      for (int c = 0; c < 3; ++c) {
        auto sample = [&](int sx, int sy) -> double {
          if (sx < 0 || sy < 0 || sx >= src.w || sy >= src.h) return 0.0;
          return src.px(sx, sy)[c];
        };
        const double v = (1 - fx) * (1 - fy) * sample(x0, y0) + fx * (1 - fy) * sample(x0 + 1, y0) +
                         (1 - fx) * fy * sample(x0, y0 + 1) + fx * fy * sample(x0 + 1, y0 + 1);
        dst[c] = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
      }
    }
  }
  return out;
}

// Applies the homography to every piece of label geometry analytically.
// Boxes become the bounding box of their four mapped corners; lane knots and
// radar pixels map directly. Depths are carried through unchanged.
inline FrameRecord transform_labels(const FrameRecord& rec, const Mat3& h) {
  FrameRecord out = rec;
  for (VehicleBox& v : out.vehicles) {
    const Vec2 c1 = h.apply({v.rect.x1, v.rect.y1});
    const Vec2 c2 = h.apply({v.rect.x2, v.rect.y1});
    const Vec2 c3 = h.apply({v.rect.x2, v.rect.y2});
    const Vec2 c4 = h.apply({v.rect.x1, v.rect.y2});
    v.rect = {std::min({c1.x, c2.x, c3.x, c4.x}), std::min({c1.y, c2.y, c3.y, c4.y}),
              std::max({c1.x, c2.x, c3.x, c4.x}), std::max({c1.y, c2.y, c3.y, c4.y})};
  }
  for (LaneAnnotation& l : out.lanes)
    for (Vec3& k : l.knots) {
      const Vec2 p = h.apply({k.x, k.y});
      k.x = p.x;
      k.y = p.y;
    }
  for (RadarReturn& r : out.radar) r.pixel = h.apply(r.pixel);
  return out;
}

enum class AugmentMode { translation, perspective };

struct AugmentParams {
  int translate_max_x = 24;
  int translate_max_y = 12;
  std::array<CornerOffsets, 7> presets = default_perspective_presets();
};

// Applies one member of the augmentation family (integer translation or a
// fixed perspective distortion) identically to the image and all labels.
inline std::pair<ImageU8, FrameRecord> augment(const ImageU8& img, const FrameRecord& labels,
                                               AugmentMode mode, int k, std::uint64_t seed,
                                               const AugmentParams& params = {}) {
  Mat3 h;
  if (mode == AugmentMode::translation) {
    std::mt19937_64 rng(seed);
    const int dx = uniform_int(rng, 2 * params.translate_max_x + 1) - params.translate_max_x;
    const int dy = uniform_int(rng, 2 * params.translate_max_y + 1) - params.translate_max_y;
    h = Mat3::translation(dx, dy);
  } else {
    h = perspective_preset(k, img.w, img.h, params.presets);
  }
  return {warp_image(img, h), transform_labels(labels, h)};
}

}  // namespace hpk
