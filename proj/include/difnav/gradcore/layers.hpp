#pragma once

#include <string>

#include "difnav/gradcore/init.hpp"
#include "difnav/gradcore/ops.hpp"

namespace difnav::gradcore {

enum class Activation { kGelu, kMish };

inline constexpr double kNormEps = 1e-5;

template <class T>
Var<T> activate(Var<T> x, Activation a) {
  return a == Activation::kMish ? mish(x) : gelu(x);
}

template <class T>
Var<T> linear(Graph<T>& g, const std::string& prefix, Var<T> x) {
  return add(matmul(x, g.param(prefix + ".w")), g.param(prefix + ".b"));
}

template <class T>
Var<T> norm(Graph<T>& g, const std::string& prefix, Var<T> x) {
  return layer_norm(x, g.param(prefix + ".g"), g.param(prefix + ".b"), static_cast<T>(kNormEps));
}

template <class T>
void add_attention_params(ParamStore<T>& store, const std::string& prefix, std::size_t d, Rng& rng) {
  for (const char* p : {".q", ".k", ".v", ".o"}) add_linear(store, prefix + p, d, d, rng);
}

/// Projected multi-head attention of `queries` over `context`.
template <class T>
Var<T> multi_head_attention(Graph<T>& g, const std::string& prefix, Var<T> queries, Var<T> context,
                            const AttentionMask* mask, std::size_t heads) {
  Var<T> q = linear(g, prefix + ".q", queries);
  Var<T> k = linear(g, prefix + ".k", context);
  Var<T> v = linear(g, prefix + ".v", context);
  return linear(g, prefix + ".o", attention(q, k, v, mask, heads));
}

template <class T>
void add_ffn_params(ParamStore<T>& store, const std::string& prefix, std::size_t d, std::size_t hidden, Rng& rng) {
  add_linear(store, prefix + ".fc1", d, hidden, rng);
  add_linear(store, prefix + ".fc2", hidden, d, rng);
}

template <class T>
Var<T> ffn(Graph<T>& g, const std::string& prefix, Var<T> x, Activation act) {
  return linear(g, prefix + ".fc2", activate(linear(g, prefix + ".fc1", x), act));
}

/// Pre-norm self-attention transformer layer.
template <class T>
void add_self_block_params(ParamStore<T>& store, const std::string& prefix, std::size_t d, std::size_t hidden,
                           Rng& rng) {
  add_norm(store, prefix + ".ln1", d);
  add_attention_params(store, prefix + ".attn", d, rng);
  add_norm(store, prefix + ".ln2", d);
  add_ffn_params(store, prefix + ".ffn", d, hidden, rng);
}

template <class T>
Var<T> self_block(Graph<T>& g, const std::string& prefix, Var<T> x, const AttentionMask* mask, std::size_t heads,
                  Activation act) {
  Var<T> h = norm(g, prefix + ".ln1", x);
  x = add(x, multi_head_attention(g, prefix + ".attn", h, h, mask, heads));
  return add(x, ffn(g, prefix + ".ffn", norm(g, prefix + ".ln2", x), act));
}

}  // namespace difnav::gradcore
