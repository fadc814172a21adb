#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "difnav/gradcore/tensor.hpp"

namespace difnav::gradcore {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// AdamW moments and step counter.
template <class T>
struct OptimizerState {
  AdamWConfig config;
  long step = 0;
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
};

/// One AdamW update over every parameter in `grads`.
///
/// Weight decay is decoupled: p <- p * (1 - lr * wd) before the bias-corrected moment step.
/// A non-finite gradient aborts the whole step before any parameter changes.
template <class T>
void optimizer_step(ParamStore<T>& params, const GradMap<T>& grads, OptimizerState<T>& state) {
  for (const auto& [name, g] : grads) {
    const auto& p = params.get(name);
    if (g.size() != p.size()) {
      throw DimensionError("gradient for " + name + " has " + std::to_string(g.size()) + " entries, parameter " +
                           shape_str(p.shape));
    }
    for (T x : g) {
      if (!std::isfinite(static_cast<double>(x))) throw NonFiniteError("non-finite gradient in parameter " + name);
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (const auto& [name, g] : grads) {
    auto& p = params.get(name).data;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(p.size(), T(0));
      v.assign(p.size(), T(0));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = static_cast<T>(c.beta1 * m[i] + (1.0 - c.beta1) * gi);
      v[i] = static_cast<T>(c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] = static_cast<T>(p[i] * decay - c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

}  // namespace difnav::gradcore
