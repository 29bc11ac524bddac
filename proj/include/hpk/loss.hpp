#pragma once

#include <cmath>
#include <vector>

#include "hpk/tensor.hpp"

namespace hpk {

// Stable softmax over K logits (max subtraction).
template <typename T>
void softmax(const T* logits, int k, T* probs) {
  double mx = static_cast<double>(logits[0]);
  for (int i = 1; i < k; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double sum = 0;
  for (int i = 0; i < k; ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - mx);
    probs[i] = static_cast<T>(e);
    sum += e;
  }
  for (int i = 0; i < k; ++i) probs[i] = static_cast<T>(static_cast<double>(probs[i]) / sum);
}

// loss = -log softmax(logits)[target]; grad (optional) = softmax - onehot.
template <typename T>
double softmax_cross_entropy(const T* logits, int k, int target, T* grad = nullptr) {
  if (k < 2) throw ConfigError("softmax_cross_entropy needs K >= 2");
  if (target < 0 || target >= k) throw ConfigError("softmax_cross_entropy target out of range");
  double mx = static_cast<double>(logits[0]);
  for (int i = 1; i < k; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double sum = 0;
  for (int i = 0; i < k; ++i) sum += std::exp(static_cast<double>(logits[i]) - mx);
  const double log_sum = std::log(sum) + mx;
  const double loss = log_sum - static_cast<double>(logits[target]);
  if (grad) {
    for (int i = 0; i < k; ++i) {
      double p = std::exp(static_cast<double>(logits[i]) - log_sum);
      grad[i] = static_cast<T>(i == target ? p - 1.0 : p);
    }
  }
  return loss;
}

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, int target, Tensor<T>* grad = nullptr) {
  if (grad) {
    grad->shape = logits.shape;
    grad->data.assign(logits.size(), T(0));
    return softmax_cross_entropy(logits.ptr(), static_cast<int>(logits.size()), target,
                                 grad->ptr());
  }
  return softmax_cross_entropy(logits.ptr(), static_cast<int>(logits.size()), target,
                               static_cast<T*>(nullptr));
}

namespace detail {

template <typename T>
std::size_t masked_count(const Tensor<T>& mask) {
  std::size_t n = 0;
  for (const T& m : mask.data)
    if (m != T(0)) ++n;
  return n;
}

}  // namespace detail

// Mean absolute error over masked elements; subgradient at 0 is 0.
// An empty mask yields loss 0 with zero gradient.
template <typename T>
double l1_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& mask,
               Tensor<T>* grad = nullptr) {
  if (pred.shape != target.shape || pred.shape != mask.shape)
    throw ConfigError("l1_loss shape mismatch");
  if (grad) {
    grad->shape = pred.shape;
    grad->data.assign(pred.size(), T(0));
  }
  const std::size_t n = detail::masked_count(mask);
  if (n == 0) return 0.0;
  double sum = 0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == T(0)) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += std::abs(d);
    if (grad) grad->data[i] = static_cast<T>(d > 0 ? inv : (d < 0 ? -inv : 0.0));
  }
  return sum * inv;
}

// Mean squared error over masked elements; gradient 2*(pred-target)/count.
template <typename T>
double l2_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& mask,
               Tensor<T>* grad = nullptr) {
  if (pred.shape != target.shape || pred.shape != mask.shape)
    throw ConfigError("l2_loss shape mismatch");
  if (grad) {
    grad->shape = pred.shape;
    grad->data.assign(pred.size(), T(0));
  }
  const std::size_t n = detail::masked_count(mask);
  if (n == 0) return 0.0;
  double sum = 0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == T(0)) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += d * d;
    if (grad) grad->data[i] = static_cast<T>(2.0 * d * inv);
  }
  return sum * inv;
}

}  // namespace hpk
