#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "difnav/core/hash.hpp"
#include "difnav/diffpolicy/schedule.hpp"
#include "difnav/gradcore/layers.hpp"
#include "difnav/navsim/grid.hpp"

namespace difnav::diffpolicy {

using gradcore::Graph;
using gradcore::ParamStore;
using gradcore::Shape;
using gradcore::Var;
using navsim::Vec2;

struct DenoiserConfig {
  std::size_t cond_dim = 64;     // width of S_t
  std::size_t horizon = 1;       // T_a
  std::size_t channels = 64;
  std::size_t blocks = 2;        // trunk conv layers = 1 + 2 * blocks
  std::size_t kernel = 3;
  std::size_t time_dim = 32;
  std::size_t time_hidden = 128;
  std::size_t regress_hidden = 128;
  bool clip_sample = true;
  gradcore::Activation activation = gradcore::Activation::kGelu;

  std::size_t action_size() const { return 2 * horizon; }
  std::size_t conv_layers() const { return 1 + 2 * blocks; }
};

/// Blocks needed for a trunk of `layers` conv layers (odd, >= 3).
inline std::size_t blocks_for_layers(std::size_t layers) {
  if (layers < 3 || layers % 2 == 0) throw ParameterError("conv trunk depth must be odd and >= 3");
  return (layers - 1) / 2;
}

template <class T>
void add_conv(ParamStore<T>& s, const std::string& p, std::size_t cin, std::size_t cout, std::size_t width, Rng& rng) {
  s.add(p + ".w", gradcore::fan_in_uniform<T>({cout, cin, width}, cin * width, rng));
  s.add(p + ".b", gradcore::Tensor<T>({cout}));
}

template <class T>
void add_denoiser_params(ParamStore<T>& s, const DenoiserConfig& c, Rng& rng) {
  using gradcore::add_linear;
  add_linear(s, "dp.time.fc1", c.time_dim, c.time_hidden, rng);
  add_linear(s, "dp.time.fc2", c.time_hidden, c.time_dim, rng);
  add_linear(s, "dp.cond", c.cond_dim, c.cond_dim, rng);
  add_conv(s, "dp.in", 2, c.channels, c.kernel, rng);
  for (std::size_t b = 0; b < c.blocks; ++b) {
    const std::string p = "dp.blk" + std::to_string(b);
    add_conv(s, p + ".conv1", c.channels, c.channels, c.kernel, rng);
    add_linear(s, p + ".film", c.cond_dim + c.time_dim, 2 * c.channels, rng);
    add_conv(s, p + ".conv2", c.channels, c.channels, c.kernel, rng);
  }
  add_conv(s, "dp.head", c.channels, 2, 1, rng);
}

template <class T>
void add_regression_params(ParamStore<T>& s, const DenoiserConfig& c, Rng& rng) {
  gradcore::add_linear(s, "dp.reg.fc1", c.cond_dim, c.regress_hidden, rng);
  gradcore::add_linear(s, "dp.reg.fc2", c.regress_hidden, c.action_size(), rng);
}

/// Sinusoidal embedding of integer steps: [sin(k w_i) ..., cos(k w_i) ...].
inline std::vector<double> timestep_features(const std::vector<int>& ks, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out;
  out.reserve(ks.size() * dim);
  for (int k : ks) {
    std::vector<double> row(dim, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
      const double w = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(half - 1, 1)));
      row[i] = std::sin(k * w);
      row[half + i] = std::cos(k * w);
    }
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

template <class T>
Var<T> conv(Graph<T>& g, const std::string& p, Var<T> x, std::size_t width) {
  return gradcore::conv1d(x, g.param(p + ".w"), g.param(p + ".b"), 1, width / 2);
}

template <class T>
void require_finite(Var<T> v, const char* what) {
  for (T x : v.value())
    if (!std::isfinite(static_cast<double>(x))) throw ContractError(std::string("non-finite ") + what);
}

/// Noise estimate [B, 2 T_a] for noisy actions `ak` [B, 2 T_a] (x block then y block) at steps `ks`.
template <class T>
Var<T> predict_noise(Graph<T>& g, const DenoiserConfig& c, Var<T> state, Var<T> ak, const std::vector<int>& ks) {
  using namespace gradcore;
  const std::size_t b = state.shape()[0];
  if (state.shape() != Shape{b, c.cond_dim} || ak.shape() != Shape{b, c.action_size()} || ks.size() != b)
    throw DimensionError("predict_noise expects state [B," + std::to_string(c.cond_dim) + "], action [B," +
                         std::to_string(c.action_size()) + "] and B steps");
  require_finite(state, "state embedding");
  require_finite(ak, "noisy action");
  std::vector<T> tf;
  for (double v : timestep_features(ks, c.time_dim)) tf.push_back(static_cast<T>(v));
  auto act = [&](Var<T> x) { return activate(x, c.activation); };
  Var<T> temb = linear(g, "dp.time.fc2", act(linear(g, "dp.time.fc1", g.constant({b, c.time_dim}, tf))));
  Var<T> cond = act(concat<T>({act(linear(g, "dp.cond", state)), temb}, 1));
  Var<T> h = act(conv(g, "dp.in", reshape(ak, Shape{b, 2, c.horizon}), c.kernel));
  for (std::size_t i = 0; i < c.blocks; ++i) {
    const std::string p = "dp.blk" + std::to_string(i);
    Var<T> r = act(conv(g, p + ".conv1", h, c.kernel));
    Var<T> mod = linear(g, p + ".film", cond);
    r = film(r, slice(mod, 1, 0, c.channels), slice(mod, 1, c.channels, c.channels));
    h = add(h, act(conv(g, p + ".conv2", r, c.kernel)));
  }
  return reshape(conv(g, "dp.head", h, 1), Shape{b, c.action_size()});
}

/// Denoising loss with given draws: MSE(eps, predict_noise(S, q_sample(a0, k, eps), k)).
template <class T>
Var<T> bc_loss_with(Graph<T>& g, const DenoiserConfig& c, const NoiseSchedule& s, Var<T> state,
                    const std::vector<double>& a0, const std::vector<int>& ks, const std::vector<double>& eps) {
  const std::size_t b = state.shape()[0], n = c.action_size();
  if (b == 0) throw ContractError("bc_loss on an empty batch");
  if (a0.size() != b * n || eps.size() != b * n || ks.size() != b) throw DimensionError("bc_loss draw sizes");
  std::vector<T> noisy(b * n), target(b * n);
  for (std::size_t i = 0; i < b; ++i) {
    const std::vector<double> a(a0.begin() + static_cast<std::ptrdiff_t>(i * n), a0.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    const std::vector<double> e(eps.begin() + static_cast<std::ptrdiff_t>(i * n), eps.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    const auto ak = q_sample(a, ks[i], e, s);
    for (std::size_t j = 0; j < n; ++j) {
      noisy[i * n + j] = static_cast<T>(ak[j]);
      target[i * n + j] = static_cast<T>(e[j]);
    }
  }
  Var<T> pred = predict_noise(g, c, state, g.constant({b, n}, noisy), ks);
  return gradcore::mse(pred, g.constant({b, n}, target));
}

/// Draws k ~ U{1..K} and eps ~ N(0, I) per batch element, then applies bc_loss_with.
template <class T>
Var<T> bc_loss(Graph<T>& g, const DenoiserConfig& c, const NoiseSchedule& s, Var<T> state,
               const std::vector<double>& a0, Rng& rng) {
  const std::size_t b = state.shape()[0];
  std::vector<int> ks(b);
  for (auto& k : ks) k = uniform_int(rng, 1, s.steps);
  return bc_loss_with(g, c, s, state, a0, ks, gaussian(b * c.action_size(), rng));
}

/// Deterministic baseline head [B, 2 T_a] in normalized units.
template <class T>
Var<T> regress_action(Graph<T>& g, Var<T> state) {
  return gradcore::linear(g, "dp.reg.fc2", gradcore::mish(gradcore::linear(g, "dp.reg.fc1", state)));
}

/// Intermediate actions of one sampling run, per batch item and step.
struct SampleTrace {
  struct Record {
    int k;  // the sample after step k has been applied is a^{k-1}; k = K+1 marks the initial draw
    std::size_t item;
    std::vector<double> action;
  };
  std::vector<Record> records;
};

inline std::string format_trace(const SampleTrace& t) {
  std::string s;
  for (const auto& r : t.records) {
    s += "k=" + std::to_string(r.k - 1) + " item=" + std::to_string(r.item);
    for (double v : r.action) s += " " + format_double(v);
    s += "\n";
  }
  return s;
}

/// Runs K reverse steps from a^K ~ N(0, I) for every row of `states` [B, cond_dim].
/// Returns normalized actions, row-major [B][2 T_a].
template <class T>
std::vector<std::vector<double>> sample_normalized(const ParamStore<T>& params, const DenoiserConfig& c,
                                                   const NoiseSchedule& s, const std::vector<T>& states, Rng& rng,
                                                   SampleTrace* trace = nullptr) {
  const std::size_t n = c.action_size(), b = states.size() / c.cond_dim;
  if (b * c.cond_dim != states.size() || b == 0) throw DimensionError("sample state buffer size");
  std::vector<std::vector<double>> a(b);
  for (auto& row : a) row = gaussian(n, rng);
  if (trace)
    for (std::size_t i = 0; i < b; ++i) trace->records.push_back({s.steps + 1, i, a[i]});
  for (int k = s.steps; k >= 1; --k) {
    Graph<T> g(&params, false);
    std::vector<T> flat;
    for (const auto& row : a)
      for (double v : row) flat.push_back(static_cast<T>(v));
    const auto eps = predict_noise(g, c, g.constant({b, c.cond_dim}, states), g.constant({b, n}, flat),
                                   std::vector<int>(b, k)).value();
    for (std::size_t i = 0; i < b; ++i) {
      const std::vector<double> e(eps.begin() + static_cast<std::ptrdiff_t>(i * n), eps.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      const auto z = k > 1 ? gaussian(n, rng) : std::vector<double>{};
      a[i] = denoise_update(a[i], k, e, s, z, c.clip_sample);
      if (trace) trace->records.push_back({k, i, a[i]});
    }
  }
  return a;
}

/// Converts a normalized action row (x block then y block) to T_a displacements in meters.
inline std::vector<Vec2> denormalize(const std::vector<double>& a, std::size_t horizon, double scale) {
  std::vector<Vec2> out(horizon);
  for (std::size_t t = 0; t < horizon; ++t) out[t] = {a[t] * scale, a[horizon + t] * scale};
  return out;
}

inline std::vector<double> normalize(const std::vector<Vec2>& d, double scale) {
  std::vector<double> a(2 * d.size());
  for (std::size_t t = 0; t < d.size(); ++t) {
    a[t] = std::clamp(d[t].x / scale, -1.0, 1.0);
    a[d.size() + t] = std::clamp(d[t].y / scale, -1.0, 1.0);
  }
  return a;
}

/// Samples first-waypoint displacements in meters for each state row.
template <class T>
std::vector<Vec2> sample_action(const ParamStore<T>& params, const DenoiserConfig& c, const NoiseSchedule& s,
                                const std::vector<T>& states, double scale, Rng& rng, SampleTrace* trace = nullptr) {
  std::vector<Vec2> out;
  for (const auto& row : sample_normalized(params, c, s, states, rng, trace))
    out.push_back(denormalize(row, c.horizon, scale).front());
  return out;
}

}  // namespace difnav::diffpolicy
