#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hpk/tensor.hpp"

namespace hpk {

struct ImageU8 {
  int w = 0, h = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major

  ImageU8() = default;
  ImageU8(int width, int height) : w(width), h(height), rgb(static_cast<std::size_t>(width) * height * 3, 0) {}

  std::uint8_t* px(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * w + x); }
  const std::uint8_t* px(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * w + x);
  }
};

// Binary PPM (P6, maxval 255).
inline void write_ppm(const std::string& path, const ImageU8& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open image for writing: " + path);
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           static_cast<std::streamsize>(img.rgb.size()));
  if (!os) throw ConfigError("image write failed: " + path);
}

inline ImageU8 read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open image: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw ConfigError("not a binary PPM (P6): " + path);
  auto next_int = [&]() {
    // Skip whitespace and '#' comments between header fields.
    int c = is.get();
    while (c == '#' || std::isspace(c)) {
      if (c == '#')
        while (c != '\n' && c != EOF) c = is.get();
      c = is.get();
    }
    int v = 0;
    while (std::isdigit(c)) {
      v = v * 10 + (c - '0');
      c = is.get();
    }
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw ConfigError("unsupported PPM header: " + path);
  ImageU8 img(w, h);
  if (!is.read(reinterpret_cast<char*>(img.rgb.data()),
               static_cast<std::streamsize>(img.rgb.size())))
    throw ConfigError("truncated PPM payload: " + path);
  return img;
}

// 3 x H x W float tensor in [0, 1].
template <typename T = float>
Tensor<T> image_to_tensor(const ImageU8& img) {
  Tensor<T> t({3, img.h, img.w});
  const std::size_t plane = static_cast<std::size_t>(img.w) * img.h;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      t.data[c * plane + i] = static_cast<T>(img.rgb[3 * i + c] / 255.0);
  return t;
}

}  // namespace hpk
