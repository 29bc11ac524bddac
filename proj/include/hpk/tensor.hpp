#pragma once

#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "hpk/common.hpp"

namespace hpk {

inline std::size_t numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("tensor dimension must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// Dense n-dimensional array, row-major. `grad` is empty outside training.
template <typename T = float>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel(shape), T(0)) {}

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  std::size_t size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  // Flat access.
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // 3D convenience for C x H x W tensors.
  T& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename Rng>
  void fill_uniform(Rng& rng, double lo, double hi) {
    for (auto& v : data) v = static_cast<T>(uniform(rng, lo, hi));
  }
};

template <typename T>
void check_finite(const std::vector<T>& v, const char* what) {
  for (const T& x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string("non-finite value in ") + what);
  }
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
  check_finite(t.data, what);
}

// Named view of a learnable tensor; used by the optimizer and checkpoints.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

}  // namespace hpk
