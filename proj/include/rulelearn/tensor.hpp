#ifndef RULELEARN_TENSOR_HPP
#define RULELEARN_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rulelearn/errors.hpp"

namespace rulelearn {

// Dense tensor of rank <= 3, row-major. Real is float (training default)
// or double (gradient checks, oracles).
template <class Real>
struct TensorT {
  std::vector<int> shape;
  std::vector<Real> v;

  TensorT() = default;

  static TensorT zeros(std::vector<int> shape) {
    TensorT t;
    require(shape.size() >= 1 && shape.size() <= 3, Errc::ShapeMismatch,
            "tensor rank must be 1..3");
    std::size_t n = 1;
    for (int d : shape) {
      require(d >= 0, Errc::ShapeMismatch, "negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    t.shape = std::move(shape);
    t.v.assign(n, Real(0));
    return t;
  }

  static TensorT scalar(Real x) {
    TensorT t = zeros({1});
    t.v[0] = x;
    return t;
  }

  static TensorT from(std::vector<int> shape, std::vector<Real> values) {
    TensorT t = zeros(std::move(shape));
    require(values.size() == t.v.size(), Errc::ShapeMismatch, "value count != shape product");
    t.v = std::move(values);
    return t;
  }

  static TensorT one_hot(int id, int dim) {
    require(id >= 0 && id < dim, Errc::IndexOutOfRange,
            "one_hot id " + std::to_string(id) + " not in [0," + std::to_string(dim) + ")");
    TensorT t = zeros({dim});
    t.v[static_cast<std::size_t>(id)] = Real(1);
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t numel() const { return v.size(); }
  int rows() const { return shape[0]; }
  int cols() const { return rank() >= 2 ? shape[1] : 1; }

  Real& at(int i) { return v[static_cast<std::size_t>(i)]; }
  Real at(int i) const { return v[static_cast<std::size_t>(i)]; }
  Real& at(int i, int j) { return v[static_cast<std::size_t>(i) * shape[1] + j]; }
  Real at(int i, int j) const { return v[static_cast<std::size_t>(i) * shape[1] + j]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (Real x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class Other>
  TensorT<Other> cast() const {
    TensorT<Other> o;
    o.shape = shape;
    o.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) o.v[i] = static_cast<Other>(v[i]);
    return o;
  }
};

template <class Real>
TensorT<Real> random_uniform(std::vector<int> shape, Real lo, Real hi, std::mt19937_64& rng) {
  auto t = TensorT<Real>::zeros(std::move(shape));
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& x : t.v) x = static_cast<Real>(dist(rng));
  return t;
}

template <class Real>
TensorT<Real> random_normal(std::vector<int> shape, Real stddev, std::mt19937_64& rng) {
  auto t = TensorT<Real>::zeros(std::move(shape));
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  for (auto& x : t.v) x = static_cast<Real>(dist(rng));
  return t;
}

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;

}  // namespace rulelearn

#endif
