#pragma once

#include <random>
#include <string>
#include <vector>

#include "hpk/geometry.hpp"
#include "hpk/io.hpp"
#include "hpk/layer.hpp"
#include "hpk/optim.hpp"

namespace hpk {

inline constexpr int kNumClasses = 3;  // background / vehicle / lane
inline constexpr int kVehicleDims = 5;
inline constexpr int kLaneDims = 6;

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // O x C x k x k
  Tensor<T> bias;    // O
};

// Fixed-topology detection network: a conv/pool/relu trunk shared by three
// 1x1-conv heads. Each final feature predicts, for every cell of its
// sub x sub grid, class logits plus vehicle and lane regression channels.
template <typename T>
struct Network {
  std::vector<LayerSpec> trunk;
  std::vector<ConvParams<T>> conv_params;  // parallel to conv entries in trunk
  ConvParams<T> cls_head, veh_head, lane_head;
  int in_channels = 3;
  int feature_channels = 0;
  int stride = 1;
  int context = 1;
  int sub = 1;  // cells per feature per axis

  int cls_channels() const { return kNumClasses * sub * sub; }
  int veh_channels() const { return kVehicleDims * sub * sub; }
  int lane_channels() const { return kLaneDims * sub * sub; }
};

namespace detail {

// Centered uniform with std 1/sqrt(fan-in); biases zero. Keeps unit variance
// through the stack before the relu halving.
template <typename T, typename Rng>
ConvParams<T> init_conv(int out_ch, int in_ch, int kernel, Rng& rng) {
  ConvParams<T> p;
  p.weight = Tensor<T>({out_ch, in_ch, kernel, kernel});
  p.bias = Tensor<T>({out_ch});
  const double a = std::sqrt(3.0 / (static_cast<double>(in_ch) * kernel * kernel));
  p.weight.fill_uniform(rng, -a, a);
  return p;
}

}  // namespace detail

// Builds a network from an architecture list. A trailing softmax-grid entry
// is accepted as the head marker; conv/maxpool/relu entries form the trunk.
template <typename T>
Network<T> make_network(const std::vector<LayerSpec>& arch, int in_channels,
                        std::uint64_t seed) {
  Network<T> net;
  net.in_channels = in_channels;
  std::mt19937_64 rng(seed);
  int channels = in_channels;
  for (const LayerSpec& s : arch) {
    s.validate();
    if (s.kind == LayerKind::softmax_grid) continue;
    net.trunk.push_back(s);
    if (s.kind == LayerKind::conv) {
      net.conv_params.push_back(detail::init_conv<T>(s.out_channels, channels, s.kernel, rng));
      channels = s.out_channels;
    }
  }
  if (net.conv_params.empty()) throw ConfigError("architecture has no conv layers");
  net.feature_channels = channels;

  const ReceptiveField rf = receptive_field(net.trunk);
  net.stride = rf.stride;
  net.context = rf.context;
  if (net.stride % kCellPx != 0)
    throw ConfigError("architecture stride must be a multiple of 4");
  net.sub = net.stride / kCellPx;

  net.cls_head = detail::init_conv<T>(net.cls_channels(), channels, 1, rng);
  net.veh_head = detail::init_conv<T>(net.veh_channels(), channels, 1, rng);
  net.lane_head = detail::init_conv<T>(net.lane_channels(), channels, 1, rng);
  return net;
}

template <typename T>
struct HeadOut {
  Tensor<T> cls, veh, lane;  // channels x feat_h x feat_w
};

// Forward cache for backpropagation: every trunk activation plus pool argmax.
template <typename T>
struct NetCache {
  std::vector<Tensor<T>> acts;            // acts[0] = input, acts[i+1] = layer i output
  std::vector<std::vector<int>> argmax;   // one entry per trunk layer (empty unless maxpool)
};

namespace detail {

template <typename T>
Tensor<T> run_conv(const Tensor<T>& in, const ConvParams<T>& p, const LayerSpec& spec) {
  const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const int O = p.weight.dim(0);
  const int OH = out_extent(H, spec), OW = out_extent(W, spec);
  Tensor<T> out({O, OH, OW});
  conv2d_forward(in.ptr(), C, H, W, p.weight.ptr(), p.bias.ptr(), O, spec.kernel, spec.stride,
                 resolve_padding(W, spec), resolve_padding(H, spec), out.ptr(), OH, OW);
  return out;
}

inline LayerSpec one_by_one() {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.kernel = 1;
  s.stride = 1;
  s.padding = 0;
  return s;
}

}  // namespace detail

template <typename T>
HeadOut<T> forward_network(const Network<T>& net, const Tensor<T>& input,
                           NetCache<T>* cache = nullptr) {
  if (input.shape.size() != 3 || input.dim(0) != net.in_channels)
    throw ConfigError("network input must be " + std::to_string(net.in_channels) + " x H x W");
  if (cache) {
    cache->acts.clear();
    cache->argmax.assign(net.trunk.size(), {});
    cache->acts.push_back(input);
  }
  Tensor<T> cur = input;
  std::size_t conv_i = 0;
  for (std::size_t li = 0; li < net.trunk.size(); ++li) {
    const LayerSpec& s = net.trunk[li];
    if (s.kind == LayerKind::conv) {
      cur = detail::run_conv(cur, net.conv_params[conv_i++], s);
    } else if (s.kind == LayerKind::maxpool) {
      const int C = cur.dim(0), H = cur.dim(1), W = cur.dim(2);
      const int OH = out_extent(H, s), OW = out_extent(W, s);
      Tensor<T> out({C, OH, OW});
      std::vector<int> arg;
      if (cache) arg.resize(out.size());
      maxpool2d_forward(cur.ptr(), C, H, W, s.kernel, s.stride, resolve_padding(W, s),
                        resolve_padding(H, s), out.ptr(), OH, OW,
                        cache ? arg.data() : nullptr);
      if (cache) cache->argmax[li] = std::move(arg);
      cur = std::move(out);
    } else if (s.kind == LayerKind::relu) {
      Tensor<T> out(cur.shape);
      relu_forward(cur.ptr(), cur.size(), out.ptr());
      cur = std::move(out);
    }
    if (cache) cache->acts.push_back(cur);
  }
  check_finite(cur, "trunk features");

  HeadOut<T> heads;
  const LayerSpec h = detail::one_by_one();
  heads.cls = detail::run_conv(cur, net.cls_head, h);
  heads.veh = detail::run_conv(cur, net.veh_head, h);
  heads.lane = detail::run_conv(cur, net.lane_head, h);
  check_finite(heads.cls, "cls head");
  check_finite(heads.veh, "veh head");
  check_finite(heads.lane, "lane head");
  return heads;
}

// Gradient buffers in parameters() order.
template <typename T>
struct Gradients {
  std::vector<std::vector<T>> g;

  void add_scaled(const Gradients& other, double scale) {
    if (g.empty()) g.resize(other.g.size());
    for (std::size_t i = 0; i < other.g.size(); ++i) {
      if (g[i].empty()) g[i].assign(other.g[i].size(), T(0));
      for (std::size_t j = 0; j < other.g[i].size(); ++j)
        g[i][j] += static_cast<T>(scale * static_cast<double>(other.g[i][j]));
    }
  }
};

template <typename T>
std::vector<ParamRef<T>> parameters(Network<T>& net) {
  std::vector<ParamRef<T>> ps;
  for (std::size_t i = 0; i < net.conv_params.size(); ++i) {
    ps.push_back({"conv" + std::to_string(i) + ".weight", &net.conv_params[i].weight});
    ps.push_back({"conv" + std::to_string(i) + ".bias", &net.conv_params[i].bias});
  }
  ps.push_back({"head.cls.weight", &net.cls_head.weight});
  ps.push_back({"head.cls.bias", &net.cls_head.bias});
  ps.push_back({"head.veh.weight", &net.veh_head.weight});
  ps.push_back({"head.veh.bias", &net.veh_head.bias});
  ps.push_back({"head.lane.weight", &net.lane_head.weight});
  ps.push_back({"head.lane.bias", &net.lane_head.bias});
  return ps;
}

// Backpropagates head gradients through the network. Parameter gradients are
// written into `grads` (parameters() order); trunk/head input gradients are
// handled internally.
template <typename T>
void backward_network(const Network<T>& net, const NetCache<T>& cache, const Tensor<T>& dcls,
                      const Tensor<T>& dveh, const Tensor<T>& dlane, Gradients<T>& grads) {
  const std::size_t n_params = net.conv_params.size() * 2 + 6;
  grads.g.assign(n_params, {});

  const Tensor<T>& feat = cache.acts.back();
  const int F = feat.dim(0), FH = feat.dim(1), FW = feat.dim(2);
  const LayerSpec h = detail::one_by_one();
  const PadPair none{0, 0};

  Tensor<T> dfeat(feat.shape);
  std::vector<T> dfeat_head(feat.size());
  auto head_backward = [&](const ConvParams<T>& p, const Tensor<T>& dout, std::size_t gw,
                           std::size_t gb) {
    grads.g[gw].assign(p.weight.size(), T(0));
    grads.g[gb].assign(p.bias.size(), T(0));
    conv2d_backward(feat.ptr(), F, FH, FW, p.weight.ptr(), p.weight.dim(0), 1, 1, none, none,
                    dout.ptr(), FH, FW, dfeat_head.data(), grads.g[gw].data(),
                    grads.g[gb].data());
    for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] += dfeat_head[i];
  };
  const std::size_t head_base = net.conv_params.size() * 2;
  head_backward(net.cls_head, dcls, head_base + 0, head_base + 1);
  head_backward(net.veh_head, dveh, head_base + 2, head_base + 3);
  head_backward(net.lane_head, dlane, head_base + 4, head_base + 5);

  Tensor<T> dcur = std::move(dfeat);
  std::size_t conv_i = net.conv_params.size();
  for (std::size_t li = net.trunk.size(); li-- > 0;) {
    const LayerSpec& s = net.trunk[li];
    const Tensor<T>& in = cache.acts[li];
    if (s.kind == LayerKind::conv) {
      --conv_i;
      const ConvParams<T>& p = net.conv_params[conv_i];
      grads.g[conv_i * 2].assign(p.weight.size(), T(0));
      grads.g[conv_i * 2 + 1].assign(p.bias.size(), T(0));
      Tensor<T> din(in.shape);
      conv2d_backward(in.ptr(), in.dim(0), in.dim(1), in.dim(2), p.weight.ptr(),
                      p.weight.dim(0), s.kernel, s.stride, resolve_padding(in.dim(2), s),
                      resolve_padding(in.dim(1), s), dcur.ptr(), dcur.dim(1), dcur.dim(2),
                      li == 0 ? nullptr : din.ptr(), grads.g[conv_i * 2].data(),
                      grads.g[conv_i * 2 + 1].data());
      dcur = std::move(din);
    } else if (s.kind == LayerKind::maxpool) {
      Tensor<T> din(in.shape);
      maxpool2d_backward(cache.argmax[li].data(), in.dim(0), in.dim(1), in.dim(2), dcur.ptr(),
                         dcur.dim(1), dcur.dim(2), din.ptr());
      dcur = std::move(din);
    } else if (s.kind == LayerKind::relu) {
      Tensor<T> din(in.shape);
      relu_backward(in.ptr(), dcur.ptr(), in.size(), din.ptr());
      dcur = std::move(din);
    }
  }
}

// --- checkpointing -----------------------------------------------------

template <typename T>
std::vector<NamedTensor> snapshot(Network<T>& net) {
  std::vector<NamedTensor> out;
  for (const ParamRef<T>& p : parameters(net)) {
    NamedTensor t;
    t.name = p.name;
    t.shape = p.tensor->shape;
    t.data.reserve(p.tensor->size());
    for (const T& v : p.tensor->data) t.data.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
void save_network(const std::string& path, Network<T>& net,
                  const OptimState<T>* opt = nullptr) {
  std::vector<NamedTensor> tensors = snapshot(net);
  if (opt) {
    tensors.push_back(NamedTensor{"opt.step_count", {1}, {static_cast<float>(opt->step_count)}});
    const auto params = parameters(net);
    for (std::size_t i = 0; i < opt->velocity.size() && i < params.size(); ++i) {
      NamedTensor t;
      t.name = "opt.velocity." + params[i].name;
      t.shape = params[i].tensor->shape;
      for (const T& v : opt->velocity[i]) t.data.push_back(static_cast<float>(v));
      tensors.push_back(std::move(t));
    }
  }
  write_checkpoint(path, tensors);
}

template <typename T>
void load_network(const std::string& path, Network<T>& net, OptimState<T>* opt = nullptr) {
  const std::vector<NamedTensor> tensors = read_checkpoint(path);
  auto find = [&](const std::string& name) -> const NamedTensor* {
    for (const NamedTensor& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  };
  auto params = parameters(net);
  for (ParamRef<T>& p : params) {
    const NamedTensor* t = find(p.name);
    if (!t) throw ConfigError("checkpoint missing tensor: " + p.name);
    if (t->shape != p.tensor->shape)
      throw ConfigError("checkpoint shape mismatch for " + p.name);
    for (std::size_t i = 0; i < t->data.size(); ++i)
      p.tensor->data[i] = static_cast<T>(t->data[i]);
  }
  if (opt) {
    if (const NamedTensor* t = find("opt.step_count"))
      opt->step_count = static_cast<long>(t->data[0]);
    opt->velocity.clear();
    for (const ParamRef<T>& p : params) {
      const NamedTensor* t = find("opt.velocity." + p.name);
      if (!t) {
        opt->velocity.clear();
        break;
      }
      std::vector<T> v;
      v.reserve(t->data.size());
      for (float x : t->data) v.push_back(static_cast<T>(x));
      opt->velocity.push_back(std::move(v));
    }
  }
}

}  // namespace hpk
