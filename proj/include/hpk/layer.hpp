#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hpk/tensor.hpp"

namespace hpk {

enum class LayerKind { conv, maxpool, relu, softmax_grid };

// Sentinel padding value: resolve so that out = ceil(in / stride).
inline constexpr int kPadSame = -1;

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int kernel = 1;
  int stride = 1;
  int padding = kPadSame;
  int out_channels = 0;

  void validate() const {
    if (kernel < 1) throw ConfigError("layer kernel must be >= 1");
    if (stride < 1) throw ConfigError("layer stride must be >= 1");
    if (padding != kPadSame && padding < 0) throw ConfigError("layer padding must be >= 0");
    if (kind == LayerKind::conv && out_channels < 1)
      throw ConfigError("conv layer needs out_channels >= 1");
  }

  bool spatial() const { return kind == LayerKind::conv || kind == LayerKind::maxpool; }
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::softmax_grid: return "softmax-grid";
  }
  return "?";
}

struct PadPair {
  int lo = 0, hi = 0;
};

inline int out_extent(int extent, const LayerSpec& s) {
  if (!s.spatial()) return extent;
  if (s.padding == kPadSame) return (extent + s.stride - 1) / s.stride;
  int out = (extent + 2 * s.padding - s.kernel) / s.stride + 1;
  if (out < 1) throw ConfigError("layer output extent < 1 (input too small)");
  return out;
}

inline PadPair resolve_padding(int extent, const LayerSpec& s) {
  if (s.padding != kPadSame) return {s.padding, s.padding};
  int out = (extent + s.stride - 1) / s.stride;
  int total = std::max(0, (out - 1) * s.stride + s.kernel - extent);
  return {total / 2, total - total / 2};
}

namespace detail {

// Valid output range [ox0, ox1] such that ox*stride - pad_lo + kx stays inside
// [0, in_extent).
inline void valid_out_range(int in_extent, int out_extent, int stride, int pad_lo, int kx,
                            int& ox0, int& ox1) {
  int lo = pad_lo - kx;
  ox0 = lo > 0 ? (lo + stride - 1) / stride : 0;
  int hi = in_extent - 1 + pad_lo - kx;
  ox1 = hi >= 0 ? std::min(out_extent - 1, hi / stride) : -1;
}

}  // namespace detail

// Cross-correlation of a C x H x W input with O x C x k x k weights.
// Accumulates in double regardless of T.
template <typename T>
void conv2d_forward(const T* in, int C, int H, int W, const T* wgt, const T* bias, int O,
                    int k, int stride, PadPair px, PadPair py, T* out, int OH, int OW) {
  std::vector<double> acc(static_cast<std::size_t>(OH) * OW);
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
  for (int o = 0; o < O; ++o) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(bias[o]));
    for (int c = 0; c < C; ++c) {
      const T* plane = in + c * in_plane;
      const T* wk = wgt + (static_cast<std::size_t>(o) * C + c) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = static_cast<double>(wk[ky * k + kx]);
          if (wv == 0.0) continue;
          int ox0, ox1;
          detail::valid_out_range(W, OW, stride, px.lo, kx, ox0, ox1);
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * stride - py.lo + ky;
            if (iy < 0 || iy >= H) continue;
            const T* irow = plane + static_cast<std::size_t>(iy) * W;
            double* arow = acc.data() + static_cast<std::size_t>(oy) * OW;
            int ix = ox0 * stride - px.lo + kx;
            for (int ox = ox0; ox <= ox1; ++ox, ix += stride) {
              arow[ox] += wv * static_cast<double>(irow[ix]);
            }
          }
        }
      }
    }
    T* orow = out + o * out_plane;
    for (std::size_t i = 0; i < out_plane; ++i) orow[i] = static_cast<T>(acc[i]);
  }
}

// Gradients of conv2d_forward. Any of din/dwgt/dbias may be null to skip.
// Written (not accumulated) into the destination buffers.
template <typename T>
void conv2d_backward(const T* in, int C, int H, int W, const T* wgt, int O, int k, int stride,
                     PadPair px, PadPair py, const T* dout, int OH, int OW, T* din, T* dwgt,
                     T* dbias) {
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;

  if (dbias) {
    for (int o = 0; o < O; ++o) {
      double s = 0;
      const T* drow = dout + o * out_plane;
      for (std::size_t i = 0; i < out_plane; ++i) s += static_cast<double>(drow[i]);
      dbias[o] = static_cast<T>(s);
    }
  }

  std::vector<double> dacc;
  if (din) dacc.assign(static_cast<std::size_t>(C) * in_plane, 0.0);

  for (int o = 0; o < O; ++o) {
    const T* drow = dout + o * out_plane;
    for (int c = 0; c < C; ++c) {
      const T* plane = in + c * in_plane;
      const std::size_t woff = (static_cast<std::size_t>(o) * C + c) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          int ox0, ox1;
          detail::valid_out_range(W, OW, stride, px.lo, kx, ox0, ox1);
          double wsum = 0;
          const double wv = static_cast<double>(wgt[woff + ky * k + kx]);
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * stride - py.lo + ky;
            if (iy < 0 || iy >= H) continue;
            const T* irow = plane + static_cast<std::size_t>(iy) * W;
            const T* dorow = drow + static_cast<std::size_t>(oy) * OW;
            double* darow = din ? dacc.data() + c * in_plane + static_cast<std::size_t>(iy) * W
                                : nullptr;
            int ix = ox0 * stride - px.lo + kx;
            for (int ox = ox0; ox <= ox1; ++ox, ix += stride) {
              const double g = static_cast<double>(dorow[ox]);
              wsum += g * static_cast<double>(irow[ix]);
              if (darow) darow[ix] += wv * g;
            }
          }
          if (dwgt) dwgt[woff + ky * k + kx] = static_cast<T>(wsum);
        }
      }
    }
  }

  if (din) {
    for (std::size_t i = 0; i < dacc.size(); ++i) din[i] = static_cast<T>(dacc[i]);
  }
}

// Max pooling over each channel. `argmax`, when non-null, records the flat
// input index (iy*W+ix) feeding each output; ties resolve to the lowest index.
// Padded positions never win; a window with no valid pixel yields 0 / -1.
template <typename T>
void maxpool2d_forward(const T* in, int C, int H, int W, int k, int stride, PadPair px,
                       PadPair py, T* out, int OH, int OW, int* argmax) {
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    const T* plane = in + c * in_plane;
    T* orow = out + c * out_plane;
    int* arow = argmax ? argmax + c * out_plane : nullptr;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        T best = std::numeric_limits<T>::lowest();
        int best_idx = -1;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - py.lo + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - px.lo + kx;
            if (ix < 0 || ix >= W) continue;
            const T v = plane[static_cast<std::size_t>(iy) * W + ix];
            if (v > best) {
              best = v;
              best_idx = iy * W + ix;
            }
          }
        }
        orow[static_cast<std::size_t>(oy) * OW + ox] = best_idx < 0 ? T(0) : best;
        if (arow) arow[static_cast<std::size_t>(oy) * OW + ox] = best_idx;
      }
    }
  }
}

template <typename T>
void maxpool2d_backward(const int* argmax, int C, int H, int W, const T* dout, int OH, int OW,
                        T* din) {
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
  std::fill(din, din + static_cast<std::size_t>(C) * in_plane, T(0));
  for (int c = 0; c < C; ++c) {
    const int* arow = argmax + c * out_plane;
    const T* drow = dout + c * out_plane;
    T* dplane = din + c * in_plane;
    for (std::size_t i = 0; i < out_plane; ++i) {
      if (arow[i] >= 0) dplane[arow[i]] += drow[i];
    }
  }
}

template <typename T>
void relu_forward(const T* in, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(const T* in, const T* dout, std::size_t n, T* din) {
  for (std::size_t i = 0; i < n; ++i) din[i] = in[i] > T(0) ? dout[i] : T(0);
}

// Allocating convenience wrapper matching the op-level contract.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 const LayerSpec& spec) {
  spec.validate();
  if (input.shape.size() != 3) throw ConfigError("conv2d expects C x H x W input");
  if (weights.shape.size() != 4) throw ConfigError("conv2d expects O x C x k x k weights");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int O = weights.dim(0);
  if (weights.dim(1) != C) throw ConfigError("conv2d weight/input channel mismatch");
  if (weights.dim(2) != spec.kernel || weights.dim(3) != spec.kernel)
    throw ConfigError("conv2d weight kernel size mismatch");
  if (static_cast<int>(bias.size()) != O) throw ConfigError("conv2d bias size mismatch");
  const int OH = out_extent(H, spec), OW = out_extent(W, spec);
  Tensor<T> out({O, OH, OW});
  conv2d_forward(input.ptr(), C, H, W, weights.ptr(), bias.ptr(), O, spec.kernel, spec.stride,
                 resolve_padding(W, spec), resolve_padding(H, spec), out.ptr(), OH, OW);
  check_finite(out, "conv2d output");
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, const LayerSpec& spec) {
  spec.validate();
  if (input.shape.size() != 3) throw ConfigError("maxpool2d expects C x H x W input");
  const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const int OH = out_extent(H, spec), OW = out_extent(W, spec);
  Tensor<T> out({C, OH, OW});
  maxpool2d_forward(input.ptr(), C, H, W, spec.kernel, spec.stride, resolve_padding(W, spec),
                    resolve_padding(H, spec), out.ptr(), OH, OW, nullptr);
  check_finite(out, "maxpool2d output");
  return out;
}

}  // namespace hpk
