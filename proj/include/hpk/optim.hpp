#pragma once

#include <vector>

#include "hpk/tensor.hpp"

namespace hpk {

// Momentum ramp: mu(t) = min(mu_max, 1 - 1/(floor(t/ramp_steps) + 2)).
// Starts at 0.5 and approaches mu_max as training progresses.
struct MomentumSchedule {
  double mu_max = 0.95;
  long ramp_steps = 250;
  bool enabled = true;
  double fixed = 0.9;  // used when the ramp is disabled

  double at(long step) const {
    if (!enabled) return fixed;
    const double mu = 1.0 - 1.0 / (static_cast<double>(step / ramp_steps) + 2.0);
    return std::min(mu_max, mu);
  }
};

inline double lr_at_epoch(double base_lr, int epoch, double decay, int every_epochs) {
  if (every_epochs <= 0 || decay <= 0) return base_lr;
  double lr = base_lr;
  for (int e = every_epochs; e <= epoch; e += every_epochs) lr *= decay;
  return lr;
}

template <typename T>
struct OptimState {
  double learning_rate = 0.01;
  double momentum = 0.9;                   // effective value for the next step
  std::vector<std::vector<T>> velocity;    // mirrors parameter shapes
  long step_count = 0;
};

// v <- mu*v - lr*g;  p <- p + v. Velocity buffers are created lazily on the
// first step. Throws NumericError if any parameter leaves the finite domain.
template <typename T>
void sgd_momentum_step(std::vector<ParamRef<T>>& params, OptimState<T>& state) {
  if (state.velocity.size() != params.size()) {
    state.velocity.clear();
    for (auto& p : params) state.velocity.emplace_back(p.tensor->size(), T(0));
  }
  const double mu = state.momentum;
  const double lr = state.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& t = *params[i].tensor;
    std::vector<T>& v = state.velocity[i];
    if (v.size() != t.size()) throw ConfigError("optimizer velocity shape mismatch");
    t.ensure_grad();
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double vj = mu * static_cast<double>(v[j]) - lr * static_cast<double>(t.grad[j]);
      v[j] = static_cast<T>(vj);
      t.data[j] = static_cast<T>(static_cast<double>(t.data[j]) + vj);
      if (!std::isfinite(static_cast<double>(t.data[j])))
        throw NumericError("non-finite parameter after optimizer step: " + params[i].name);
    }
  }
  ++state.step_count;
}

}  // namespace hpk
