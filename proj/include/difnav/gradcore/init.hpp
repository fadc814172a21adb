#pragma once

#include <cmath>
#include <random>
#include <string>

#include "difnav/core/rng.hpp"
#include "difnav/gradcore/tensor.hpp"

namespace difnav::gradcore {

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : t.data) x = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Tensor<T> normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : t.data) x = static_cast<T>(dist(rng));
  return t;
}

/// Registers a linear layer `prefix.w` [in, out] and `prefix.b` [out].
template <class T>
void add_linear(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  store.add(prefix + ".w", fan_in_uniform<T>({in, out}, in, rng));
  store.add(prefix + ".b", Tensor<T>({out}));
}

/// Registers `prefix.g` = 1 and `prefix.b` = 0 of width n.
template <class T>
void add_norm(ParamStore<T>& store, const std::string& prefix, std::size_t n) {
  store.add(prefix + ".g", Tensor<T>({n}, T(1)));
  store.add(prefix + ".b", Tensor<T>({n}));
}

/// Copies every parameter into another scalar type.
template <class To, class From>
ParamStore<To> convert_store(const ParamStore<From>& src) {
  ParamStore<To> out;
  for (const auto& [name, t] : src) {
    Tensor<To> c(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) c.data[i] = static_cast<To>(t.data[i]);
    out.add(name, std::move(c));
  }
  return out;
}

}  // namespace difnav::gradcore
