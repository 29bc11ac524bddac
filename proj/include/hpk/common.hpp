#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hpk {

// Thrown on invalid configuration, malformed input files or bad arguments.
// The CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a computation produces NaN/Inf or otherwise leaves the
// numeric domain. The CLI maps this to exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 v) { return std::sqrt(dot(v, v)); }
inline double dist(Vec3 a, Vec3 b) { return norm(a - b); }

// Axis-aligned pixel rectangle, [x1,x2) x [y1,y2) half-open by convention.
struct Rect {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool valid() const { return x2 > x1 && y2 > y1; }
  Vec2 center() const { return {0.5 * (x1 + x2), 0.5 * (y1 + y2)}; }

  bool contains(const Rect& inner) const {
    return inner.x1 >= x1 && inner.x2 <= x2 && inner.y1 >= y1 && inner.y2 <= y2;
  }
};

inline Rect intersect(const Rect& a, const Rect& b) {
  return {std::max(a.x1, b.x1), std::max(a.y1, b.y1),
          std::min(a.x2, b.x2), std::min(a.y2, b.y2)};
}

// Deterministic uniform double in [0,1). Avoids std::uniform_real_distribution,
// whose output sequence is implementation defined.
template <typename Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Rng>
double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n), deterministic across platforms for a fixed rng.
template <typename Rng>
int uniform_int(Rng& rng, int n) {
  return static_cast<int>(uniform01(rng) * n) % n;
}

inline double sq(double v) { return v * v; }

}  // namespace hpk
