#pragma once

#include <random>

#include "hpk/detect.hpp"

namespace hpk {

namespace detail {

// Signature of every non-smooth decision the forward pass makes: relu input
// signs, pool argmax choices and the sign of each masked regression residual.
// Finite differences are only meaningful when a perturbation stays on one
// side of all of them.
template <typename T>
struct KinkSignature {
  std::vector<std::uint8_t> bits;
  std::vector<int> argmax;

  bool operator==(const KinkSignature&) const = default;
};

template <typename T>
KinkSignature<T> kink_signature(const Network<T>& net, const NetCache<T>& cache,
                                const HeadOut<T>& heads, const GridLabel& label,
                                const GridGeometry& g) {
  KinkSignature<T> sig;
  for (std::size_t li = 0; li < net.trunk.size(); ++li) {
    if (net.trunk[li].kind == LayerKind::relu) {
      const Tensor<T>& in = cache.acts[li];
      for (const T& v : in.data) sig.bits.push_back(v > T(0));
    } else if (net.trunk[li].kind == LayerKind::maxpool) {
      sig.argmax.insert(sig.argmax.end(), cache.argmax[li].begin(), cache.argmax[li].end());
    }
  }
  const int sub = g.sub;
  for (int cy = 0; cy < g.cells_y; ++cy) {
    const int fy = cy / sub, sy = cy % sub;
    for (int cx = 0; cx < g.cells_x; ++cx) {
      const int fx = cx / sub, sx = cx % sub;
      const std::size_t ci = g.cell_index(cx, cy);
      const Vec2 c = cell_center(cx, cy);
      if (label.reg_mask[ci] == static_cast<std::uint8_t>(CellClass::vehicle)) {
        for (int d = 0; d < kVehicleDims; ++d) {
          const std::size_t ii =
              detail::head_channel_index(d, sx, sy, sub, fx, fy, g.feat_w, g.feat_h);
          const double scale = d == 4 ? 100.0 : static_cast<double>(g.context);
          const double center = d == 4 ? 0.0 : (d % 2 == 0 ? c.x : c.y);
          const double diff = center + static_cast<double>(heads.veh[ii]) * scale -
                              static_cast<double>(label.veh_targets[ci * kVehicleDims + d]);
          sig.bits.push_back(diff > 0);
        }
      } else if (label.reg_mask[ci] == static_cast<std::uint8_t>(CellClass::lane)) {
        for (int d = 0; d < kLaneDims; ++d) {
          const std::size_t ii =
              detail::head_channel_index(d, sx, sy, sub, fx, fy, g.feat_w, g.feat_h);
          const double scale = d >= 4 ? 100.0 : static_cast<double>(g.context);
          const double center = d >= 4 ? 0.0 : (d % 2 == 0 ? c.x : c.y);
          const double diff = center + static_cast<double>(heads.lane[ii]) * scale -
                              static_cast<double>(label.lane_targets[ci * kLaneDims + d]);
          sig.bits.push_back(diff > 0);
        }
      }
    }
  }
  return sig;
}

}  // namespace detail

// Central-difference check of the full network gradient against the analytic
// backward pass, over a random subsample of at least `min_samples` parameters.
// Samples whose perturbation crosses a relu/pool/L1 kink are skipped (the
// gradient is a subgradient there and finite differences do not apply).
// Returns the maximum relative error |analytic - numeric| / max(|a|, |n|, floor).
template <typename T>
double grad_check(Network<T>& net, const Tensor<T>& input, const GridLabel& label,
                  const GridGeometry& geom, double eps = 1e-3, std::uint64_t seed = 99,
                  std::size_t min_samples = 100, double floor = 1e-6) {
  const double weights[kNumClasses] = {1, 1, 1};
  auto evaluate = [&](detail::KinkSignature<T>* sig) {
    NetCache<T> cache;
    const HeadOut<T> heads = forward_network(net, input, &cache);
    if (sig) *sig = detail::kink_signature(net, cache, heads, label, geom);
    Tensor<T> dcls, dveh, dlane;
    return detection_loss_grad(heads, label, geom, 1.0, weights, dcls, dveh, dlane);
  };

  NetCache<T> cache;
  const HeadOut<T> heads = forward_network(net, input, &cache);
  Tensor<T> dcls, dveh, dlane;
  detection_loss_grad(heads, label, geom, 1.0, weights, dcls, dveh, dlane);
  Gradients<T> grads;
  backward_network(net, cache, dcls, dveh, dlane, grads);

  auto params = parameters(net);
  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor->size();
  const std::size_t samples = std::min(total, std::max(min_samples, total / 50));

  std::mt19937_64 rng(seed);
  double max_rel = 0;
  std::size_t scored = 0;
  for (std::size_t s = 0; s < samples || scored < std::min(min_samples, total); ++s) {
    if (s > 20 * samples) break;  // pathological label/net; give up on more samples
    const std::size_t pi = rng() % params.size();
    Tensor<T>& t = *params[pi].tensor;
    const std::size_t j = rng() % t.size();
    const T saved = t.data[j];
    detail::KinkSignature<T> sig_up, sig_dn;
    t.data[j] = static_cast<T>(static_cast<double>(saved) + eps);
    const double up = evaluate(&sig_up);
    t.data[j] = static_cast<T>(static_cast<double>(saved) - eps);
    const double dn = evaluate(&sig_dn);
    t.data[j] = saved;
    if (!(sig_up == sig_dn)) continue;
    const double numeric = (up - dn) / (2 * eps);
    const double analytic = static_cast<double>(grads.g[pi][j]);
    const double rel = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), floor});
    max_rel = std::max(max_rel, rel);
    ++scored;
  }
  return max_rel;
}

}  // namespace hpk
