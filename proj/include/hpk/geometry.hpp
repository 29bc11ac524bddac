#pragma once

#include <random>
#include <span>
#include <vector>

#include "hpk/layer.hpp"

namespace hpk {

// Side of the square pixel region each mask cell covers.
inline constexpr int kCellPx = 4;

// Geometry of the dense detector output: every final feature vector sees a
// square `context` view of the input and neighboring features are `stride`
// pixels apart. `offset` is the center of feature (0,0)'s context view.
struct ReceptiveField {
  int context = 1;
  int stride = 1;
  double offset = 0;
};

namespace detail {

// Per-axis window tracker: feature f of the composed stack covers input
// pixels [start + f*jump, start + f*jump + size).
struct AxisTrace {
  long start = 0;
  long jump = 1;
  long size = 1;

  void apply(int kernel, int stride, int pad_lo) {
    start -= static_cast<long>(pad_lo) * jump;
    size += static_cast<long>(kernel - 1) * jump;
    jump *= stride;
  }
};

}  // namespace detail

// Composes kernel/stride arithmetic over the stack. For kPadSame layers the
// offset uses the stride-aligned padding split (total = kernel - stride); the
// exact per-input-size window is available from context_window below.
inline ReceptiveField receptive_field(std::span<const LayerSpec> layers) {
  detail::AxisTrace t;
  for (const LayerSpec& s : layers) {
    if (!s.spatial()) continue;
    int pad_lo;
    if (s.padding == kPadSame) {
      pad_lo = std::max(0, s.kernel - s.stride) / 2;
    } else {
      pad_lo = s.padding;
    }
    t.apply(s.kernel, s.stride, pad_lo);
  }
  ReceptiveField rf;
  rf.context = static_cast<int>(t.size);
  rf.stride = static_cast<int>(t.jump);
  rf.offset = static_cast<double>(t.start) + 0.5 * static_cast<double>(t.size - 1);
  return rf;
}

inline ReceptiveField receptive_field(const std::vector<LayerSpec>& layers) {
  return receptive_field(std::span<const LayerSpec>(layers));
}

struct GridSize {
  int w = 0, h = 0;
};

// Spatial extent of the final feature map for a given input size.
inline GridSize dense_output_grid(int input_w, int input_h, std::span<const LayerSpec> layers) {
  GridSize g{input_w, input_h};
  for (const LayerSpec& s : layers) {
    g.w = out_extent(g.w, s);
    g.h = out_extent(g.h, s);
  }
  return g;
}

inline GridSize dense_output_grid(int input_w, int input_h,
                                  const std::vector<LayerSpec>& layers) {
  return dense_output_grid(input_w, input_h, std::span<const LayerSpec>(layers));
}

struct PixelWindow {
  long x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // half-open, may extend past the image

  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Exact input window feeding feature (fx, fy), resolving kPadSame against the
// actual input size (padding may split asymmetrically).
inline PixelWindow context_window(std::span<const LayerSpec> layers, int input_w, int input_h,
                                  int fx, int fy) {
  detail::AxisTrace tx, ty;
  int w = input_w, h = input_h;
  for (const LayerSpec& s : layers) {
    if (!s.spatial()) continue;
    tx.apply(s.kernel, s.stride, resolve_padding(w, s).lo);
    ty.apply(s.kernel, s.stride, resolve_padding(h, s).lo);
    w = out_extent(w, s);
    h = out_extent(h, s);
  }
  PixelWindow win;
  win.x0 = tx.start + static_cast<long>(fx) * tx.jump;
  win.x1 = win.x0 + tx.size;
  win.y0 = ty.start + static_cast<long>(fy) * ty.jump;
  win.y1 = win.y0 + ty.size;
  return win;
}

// One 4x4-pixel cell of the mask grid. The feature grid is subdivided
// (stride / 4) times per axis, so a stride-32 network has an 8x8 sub-grid.
struct MaskCell {
  int grid_x = 0, grid_y = 0;  // indices into the cell grid
  Rect pixel_rect;
};

inline MaskCell cell_pixel_region(int feature_x, int feature_y, int sub_x, int sub_y,
                                  int stride = 32) {
  if (stride % kCellPx != 0) throw ConfigError("detector stride must be a multiple of 4");
  const int sub = stride / kCellPx;
  if (sub_x < 0 || sub_x >= sub || sub_y < 0 || sub_y >= sub)
    throw ConfigError("sub-cell index out of range");
  MaskCell cell;
  cell.grid_x = feature_x * sub + sub_x;
  cell.grid_y = feature_y * sub + sub_y;
  cell.pixel_rect = {static_cast<double>(feature_x * stride + sub_x * kCellPx),
                     static_cast<double>(feature_y * stride + sub_y * kCellPx),
                     static_cast<double>(feature_x * stride + sub_x * kCellPx + kCellPx),
                     static_cast<double>(feature_y * stride + sub_y * kCellPx + kCellPx)};
  return cell;
}

// Brute-force check of the computed context windows: builds a monotone network
// (positive weights, zero bias) over the conv/pool stack and verifies that
// perturbing an input pixel upward changes exactly the features whose computed
// window contains it. Monotonicity requires kernel >= stride on every layer;
// layers violating that have gaps inside the arithmetic window.
inline bool verify_receptive_field(const std::vector<LayerSpec>& layers, int input_w,
                                   int input_h, std::uint64_t seed) {
  for (const LayerSpec& s : layers) {
    if (s.spatial() && s.kernel < s.stride)
      throw ConfigError("verify_receptive_field requires kernel >= stride");
  }

  std::mt19937_64 rng(seed);
  struct Stage {
    LayerSpec spec;
    Tensor<double> w, b;
  };
  std::vector<Stage> stages;
  int channels = 1;
  for (const LayerSpec& s : layers) {
    if (s.kind == LayerKind::conv) {
      Stage st{s, Tensor<double>({s.out_channels, channels, s.kernel, s.kernel}),
               Tensor<double>({s.out_channels})};
      st.w.fill_uniform(rng, 0.2, 1.0);
      stages.push_back(std::move(st));
      channels = s.out_channels;
    } else if (s.kind == LayerKind::maxpool) {
      stages.push_back({s, {}, {}});
    }
  }

  auto run = [&](const Tensor<double>& input) {
    Tensor<double> cur = input;
    for (const Stage& st : stages) {
      if (st.spec.kind == LayerKind::conv)
        cur = conv2d(cur, st.w, st.b, st.spec);
      else
        cur = maxpool2d(cur, st.spec);
    }
    return cur;
  };

  Tensor<double> base({1, input_h, input_w});
  base.fill_uniform(rng, 0.1, 1.0);
  const Tensor<double> base_out = run(base);
  const int gw = base_out.dim(2), gh = base_out.dim(1), oc = base_out.dim(0);

  for (int y = 0; y < input_h; ++y) {
    for (int x = 0; x < input_w; ++x) {
      Tensor<double> perturbed = base;
      perturbed.at(0, y, x) += 1e4;
      const Tensor<double> out = run(perturbed);
      for (int fy = 0; fy < gh; ++fy) {
        for (int fx = 0; fx < gw; ++fx) {
          bool changed = false;
          for (int c = 0; c < oc && !changed; ++c)
            changed = out.at(c, fy, fx) != base_out.at(c, fy, fx);
          const bool expected = context_window(layers, input_w, input_h, fx, fy)
                                    .contains(x, y);
          if (changed != expected) return false;
        }
      }
    }
  }
  return true;
}

}  // namespace hpk
