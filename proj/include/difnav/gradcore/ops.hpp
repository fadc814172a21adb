#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "difnav/gradcore/graph.hpp"

namespace difnav::gradcore {

namespace detail {

/// C (+)= op(A) * op(B) for row-major buffers; op(A) is M x K and op(B) is K x N.
template <class T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool trans_a,
          bool trans_b, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
             ni = static_cast<Eigen::Index>(n);
  Eigen::Map<Mat> cm(c, mi, ni);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate)
      cm.noalias() += lhs * rhs;
    else
      cm.noalias() = lhs * rhs;
  };
  if (!trans_a && !trans_b) run(CMap(a, mi, ki), CMap(b, ki, ni));
  if (!trans_a && trans_b) run(CMap(a, mi, ki), CMap(b, ni, ki).transpose());
  if (trans_a && !trans_b) run(CMap(a, ki, mi).transpose(), CMap(b, ki, ni));
  if (trans_a && trans_b) run(CMap(a, ki, mi).transpose(), CMap(b, ni, ki).transpose());
}

inline bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), full.end() - static_cast<std::ptrdiff_t>(suffix.size()));
}

template <class T>
void require_same_graph(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
}

template <class T>
void accumulate(Graph<T>& g, int id, const std::vector<T>& src) {
  if (!g.requires_grad(id)) return;
  auto& dst = g.grad_of(id);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

/// Matrix product of a [..., K] with b [K, N].
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.size() != 2 || sa.back() != sb[0]) {
    throw DimensionError("matmul shape mismatch: " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t k = sb[0], n = sb[1], m = numel(sa) / k;
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  std::vector<T> out(m * n);
  detail::gemm(a.value().data(), b.value().data(), out.data(), m, k, n, false, false, false);
  const int ia = a.id, ib = b.id;
  return a.graph->push("matmul", {ia, ib}, out_shape, std::move(out),
                       [ia, ib, m, k, n](Graph<T>& g, const auto& node) {
                         if (g.requires_grad(ia)) {
                           detail::gemm(node.grad.data(), g.node(ib).value.data(), g.grad_of(ia).data(), m,
                                        n, k, false, true, true);
                         }
                         if (g.requires_grad(ib)) {
                           detail::gemm(g.node(ia).value.data(), node.grad.data(), g.grad_of(ib).data(), k,
                                        m, n, true, false, true);
                         }
                       });
}

namespace detail {

enum class Binary { kAdd, kSub, kMul };

template <class T>
Var<T> binary(Var<T> a, Var<T> b, Binary op, std::string_view kind) {
  require_same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa != sb && !is_suffix(sa, sb)) {
    throw DimensionError(std::string(kind) + " shape mismatch: " + shape_str(sa) + " vs " + shape_str(sb));
  }
  const std::size_t na = numel(sa), nb = numel(sb);
  const auto& va = a.value();
  const auto& vb = b.value();
  std::vector<T> out(na);
  for (std::size_t i = 0; i < na; ++i) {
    const T x = va[i], y = vb[i % nb];
    out[i] = op == Binary::kAdd ? x + y : op == Binary::kSub ? x - y : x * y;
  }
  const int ia = a.id, ib = b.id;
  return a.graph->push(kind, {ia, ib}, sa, std::move(out), [ia, ib, na, nb, op](Graph<T>& g, const auto& node) {
    const auto& go = node.grad;
    if (g.requires_grad(ia)) {
      auto& ga = g.grad_of(ia);
      if (op == Binary::kMul) {
        const auto& vb = g.node(ib).value;
        for (std::size_t i = 0; i < na; ++i) ga[i] += go[i] * vb[i % nb];
      } else {
        for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
      }
    }
    if (g.requires_grad(ib)) {
      auto& gb = g.grad_of(ib);
      if (op == Binary::kMul) {
        const auto& va = g.node(ia).value;
        for (std::size_t i = 0; i < na; ++i) gb[i % nb] += go[i] * va[i];
      } else {
        const T sign = op == Binary::kSub ? T(-1) : T(1);
        for (std::size_t i = 0; i < na; ++i) gb[i % nb] += sign * go[i];
      }
    }
  });
}

template <class T, class F, class DF>
Var<T> unary(Var<T> x, std::string_view kind, F f, DF df) {
  const auto& v = x.value();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = f(v[i]);
  const int ix = x.id;
  return x.graph->push(kind, {ix}, x.shape(), std::move(out), [ix, df](Graph<T>& g, const auto& node) {
    const auto& xv = g.node(ix).value;
    auto& gx = g.grad_of(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += node.grad[i] * df(xv[i], node.value[i]);
  });
}

}  // namespace detail

/// Elementwise sum; `b` may equal a's shape or be a trailing suffix of it (broadcast).
template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  return detail::binary(a, b, detail::Binary::kAdd, "add");
}
template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  return detail::binary(a, b, detail::Binary::kSub, "sub");
}
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  return detail::binary(a, b, detail::Binary::kMul, "mul");
}

template <class T>
Var<T> operator+(Var<T> a, Var<T> b) {
  return add(a, b);
}
template <class T>
Var<T> operator-(Var<T> a, Var<T> b) {
  return sub(a, b);
}
template <class T>
Var<T> operator*(Var<T> a, Var<T> b) {
  return mul(a, b);
}

template <class T>
Var<T> scale(Var<T> x, T c) {
  return detail::unary(
      x, "scale", [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <class T>
Var<T> square(Var<T> x) {
  return detail::unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Var<T> gelu(Var<T> x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
  return detail::unary(
      x, "gelu", [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      });
}

template <class T>
Var<T> mish(Var<T> x) {
  auto softplus = [](T v) { return v > T(20) ? v : std::log1p(std::exp(v)); };
  return detail::unary(
      x, "mish", [softplus](T v) { return v * std::tanh(softplus(v)); },
      [softplus](T v, T) {
        const T t = std::tanh(softplus(v));
        const T sig = T(1) / (T(1) + std::exp(-v));
        return t + v * (T(1) - t * t) * sig;
      });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary(
      x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> relu(Var<T> x) {
  return detail::unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

/// Stops gradient flow.
template <class T>
Var<T> detach(Var<T> x) {
  return x.graph->constant(x.shape(), x.value());
}

template <class T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value()) s += v;
  const int ix = x.id;
  return x.graph->push("sum", {ix}, {}, {s}, [ix](Graph<T>& g, const auto& node) {
    auto& gx = g.grad_of(ix);
    for (auto& v : gx) v += node.grad[0];
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  if (x.size() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// Mean over one axis, removing it.
template <class T>
Var<T> mean_axis(Var<T> x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("mean_axis axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(outer * inner, T(0));
  const auto& v = x.value();
  const T inv = T(1) / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * len + l) * inner + i] * inv;
  const int ix = x.id;
  return x.graph->push("mean_axis", {ix}, out_shape, std::move(out),
                       [ix, outer, inner, len, inv](Graph<T>& g, const auto& node) {
                         auto& gx = g.grad_of(ix);
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t l = 0; l < len; ++l)
                             for (std::size_t i = 0; i < inner; ++i)
                               gx[(o * len + l) * inner + i] += node.grad[o * inner + i] * inv;
                       });
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  const int ix = x.id;
  return x.graph->push("reshape", {ix}, std::move(shape), x.value(), [ix](Graph<T>& g, const auto& node) {
    auto& gx = g.grad_of(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i];
  });
}

/// Concatenation along `axis`; all other extents must agree.
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of nothing");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat axis out of range for " + shape_str(s0));
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> lens;
  std::vector<int> ids;
  for (const auto& p : parts) {
    detail::require_same_graph(parts[0], p);
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
    if (!ok) throw DimensionError("concat shape mismatch: " + shape_str(s0) + " vs " + shape_str(s));
    lens.push_back(s[axis]);
    total += s[axis];
    ids.push_back(p.id);
  }
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * lens[p] * inner), lens[p] * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
    offset += lens[p];
  }
  return parts[0].graph->push("concat", ids, out_shape, std::move(out),
                              [ids, lens, outer, inner, total](Graph<T>& g, const auto& node) {
                                std::size_t off = 0;
                                for (std::size_t p = 0; p < ids.size(); ++p) {
                                  if (g.requires_grad(ids[p])) {
                                    auto& gp = g.grad_of(ids[p]);
                                    for (std::size_t o = 0; o < outer; ++o)
                                      for (std::size_t i = 0; i < lens[p] * inner; ++i)
                                        gp[o * lens[p] * inner + i] += node.grad[(o * total + off) * inner + i];
                                  }
                                  off += lens[p];
                                }
                              });
}

/// Contiguous range [start, start+len) along `axis`.
template <class T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t start, std::size_t len) {
  const Shape& s = x.shape();
  if (axis >= s.size() || start + len > s[axis] || len == 0) {
    throw DimensionError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of range on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  const auto& v = x.value();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((o * full + start) * inner), len * inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * len * inner));
  const int ix = x.id;
  return x.graph->push("slice", {ix}, out_shape, std::move(out),
                       [ix, outer, inner, full, start, len](Graph<T>& g, const auto& node) {
                         auto& gx = g.grad_of(ix);
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < len * inner; ++i)
                             gx[(o * full + start) * inner + i] += node.grad[o * len * inner + i];
                       });
}

/// Rows of x (first axis) picked by index; index -1 selects `fallback` (shape = one row).
template <class T>
Var<T> gather_rows(Var<T> x, std::span<const int> index,
                   std::type_identity_t<std::optional<Var<T>>> fallback = std::nullopt) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("gather_rows on scalar");
  const std::size_t rows = s[0];
  const std::size_t row = numel(s) / std::max<std::size_t>(rows, 1);
  if (fallback) {
    detail::require_same_graph(x, *fallback);
    if (fallback->size() != row) {
      throw DimensionError("gather_rows fallback " + shape_str(fallback->shape()) + " vs row of " + shape_str(s));
    }
  }
  std::vector<int> idx(index.begin(), index.end());
  for (int i : idx) {
    if (i >= static_cast<int>(rows) || i < -1 || (i == -1 && !fallback)) {
      throw DimensionError("gather_rows index " + std::to_string(i) + " out of range for " + shape_str(s));
    }
  }
  Shape out_shape = s;
  out_shape[0] = idx.size();
  std::vector<T> out(idx.size() * row);
  const auto& v = x.value();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const T* src = idx[r] >= 0 ? v.data() + static_cast<std::size_t>(idx[r]) * row : fallback->value().data();
    std::copy_n(src, row, out.data() + r * row);
  }
  std::vector<int> inputs{x.id};
  if (fallback) inputs.push_back(fallback->id);
  const int ix = x.id, ifb = fallback ? fallback->id : -1;
  return x.graph->push("gather_rows", inputs, out_shape, std::move(out),
                       [ix, ifb, idx, row](Graph<T>& g, const auto& node) {
                         for (std::size_t r = 0; r < idx.size(); ++r) {
                           const int target = idx[r] >= 0 ? ix : ifb;
                           if (!g.requires_grad(target)) continue;
                           auto& gt = g.grad_of(target);
                           const std::size_t base = idx[r] >= 0 ? static_cast<std::size_t>(idx[r]) * row : 0;
                           for (std::size_t i = 0; i < row; ++i) gt[base + i] += node.grad[r * row + i];
                         }
                       });
}

/// Normalizes over the last axis, then applies gain and bias (both shaped [last]).
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  if (!(eps > T(0))) throw ParameterError("layer_norm eps must be positive");
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("layer_norm on scalar");
  const std::size_t n = s.back();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError("layer_norm gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match last extent of " + shape_str(s));
  }
  const std::size_t rows = numel(s) / n;
  const auto& v = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  std::vector<T> xhat(v.size()), rstd(rows), out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = v.data() + r * n;
    T mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += row[i];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(n);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (row[i] - mu) * rstd[r];
      out[r * n + i] = xhat[r * n + i] * gv[i] + bv[i];
    }
  }
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.graph->push(
      "layer_norm", {ix, ig, ib}, s, std::move(out),
      [ix, ig, ib, n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g, const auto& node) {
        const auto& go = node.grad;
        const auto& gv = g.node(ig).value;
        if (g.requires_grad(ig) || g.requires_grad(ib)) {
          std::vector<T> dg(n, T(0)), db(n, T(0));
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < n; ++i) {
              dg[i] += go[r * n + i] * xhat[r * n + i];
              db[i] += go[r * n + i];
            }
          detail::accumulate(g, ig, dg);
          detail::accumulate(g, ib, db);
        }
        if (!g.requires_grad(ix)) return;
        auto& gx = g.grad_of(ix);
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_d = 0, mean_dx = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const T d = go[r * n + i] * gv[i];
            mean_d += d;
            mean_dx += d * xhat[r * n + i];
          }
          mean_d /= static_cast<T>(n);
          mean_dx /= static_cast<T>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const T d = go[r * n + i] * gv[i];
            gx[r * n + i] += rstd[r] * (d - mean_d - xhat[r * n + i] * mean_dx);
          }
        }
      });
}

/// Boolean mask over attention scores, shape [B, Nq, Nk]; true = attend.
struct AttentionMask {
  Shape shape;
  std::vector<std::uint8_t> allowed;
};

/// Multi-head scaled dot-product attention.
///
/// queries [B, Nq, D], keys [B, Nk, D], values [B, Nk, Dv]; D and Dv split evenly into
/// `heads`. A query row whose keys are all masked is rejected rather than averaged.
template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const AttentionMask* mask = nullptr, std::size_t heads = 1) {
  detail::require_same_graph(q, k);
  detail::require_same_graph(q, v);
  const Shape &sq = q.shape(), &sk = k.shape(), &sv = v.shape();
  if (sq.size() != 3 || sk.size() != 3 || sv.size() != 3 || sq[0] != sk[0] || sq[0] != sv[0] || sq[2] != sk[2] ||
      sk[1] != sv[1]) {
    throw DimensionError("attention shape mismatch: q" + shape_str(sq) + " k" + shape_str(sk) + " v" +
                         shape_str(sv));
  }
  const std::size_t b = sq[0], nq = sq[1], nk = sk[1], d = sq[2], dv = sv[2];
  if (heads == 0 || d % heads || dv % heads) {
    throw DimensionError("attention widths " + std::to_string(d) + "/" + std::to_string(dv) +
                         " not divisible by heads " + std::to_string(heads));
  }
  if (mask && mask->shape != Shape{b, nq, nk}) {
    throw DimensionError("attention mask " + shape_str(mask->shape) + " does not match scores " +
                         shape_str({b, nq, nk}));
  }
  if (mask) {
    for (std::size_t r = 0; r < b * nq; ++r) {
      bool any = false;
      for (std::size_t j = 0; j < nk; ++j) any = any || mask->allowed[r * nk + j];
      if (!any) throw DegenerateMaskError("attention row " + std::to_string(r) + " has every key masked");
    }
  }
  const std::size_t dh = d / heads, dvh = dv / heads;
  const T scale_f = T(1) / std::sqrt(static_cast<T>(dh));
  const auto &qv = q.value(), &kv = k.value(), &vv = v.value();
  std::vector<T> probs(b * heads * nq * nk), out(b * nq * dv, T(0));
  std::vector<T> scores(nk);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < nq; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        const T* qrow = qv.data() + (bi * nq + i) * d + h * dh;
        for (std::size_t j = 0; j < nk; ++j) {
          if (mask && !mask->allowed[(bi * nq + i) * nk + j]) {
            scores[j] = -std::numeric_limits<T>::infinity();
            continue;
          }
          const T* krow = kv.data() + (bi * nk + j) * d + h * dh;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qrow[c] * krow[c];
          scores[j] = s * scale_f;
          mx = std::max(mx, scores[j]);
        }
        T z = 0;
        T* prow = probs.data() + ((bi * heads + h) * nq + i) * nk;
        for (std::size_t j = 0; j < nk; ++j) {
          prow[j] = std::isinf(scores[j]) ? T(0) : std::exp(scores[j] - mx);
          z += prow[j];
        }
        T* orow = out.data() + (bi * nq + i) * dv + h * dvh;
        for (std::size_t j = 0; j < nk; ++j) {
          prow[j] /= z;
          if (prow[j] == T(0)) continue;
          const T* vrow = vv.data() + (bi * nk + j) * dv + h * dvh;
          for (std::size_t c = 0; c < dvh; ++c) orow[c] += prow[j] * vrow[c];
        }
      }
  const int iq = q.id, ik = k.id, iv = v.id;
  return q.graph->push(
      "attention", {iq, ik, iv}, {b, nq, dv}, std::move(out),
      [=, probs = std::move(probs)](Graph<T>& g, const auto& node) {
        const auto &qv = g.node(iq).value, &kv = g.node(ik).value, &vv = g.node(iv).value;
        const auto& go = node.grad;
        std::vector<T> dq(qv.size(), T(0)), dk(kv.size(), T(0)), dvv(vv.size(), T(0));
        std::vector<T> dp(nk), ds(nk);
        for (std::size_t bi = 0; bi < b; ++bi)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < nq; ++i) {
              const T* prow = probs.data() + ((bi * heads + h) * nq + i) * nk;
              const T* gorow = go.data() + (bi * nq + i) * dv + h * dvh;
              T dot = 0;
              for (std::size_t j = 0; j < nk; ++j) {
                const T* vrow = vv.data() + (bi * nk + j) * dv + h * dvh;
                T* dvrow = dvv.data() + (bi * nk + j) * dv + h * dvh;
                T acc = 0;
                for (std::size_t c = 0; c < dvh; ++c) {
                  acc += gorow[c] * vrow[c];
                  dvrow[c] += prow[j] * gorow[c];
                }
                dp[j] = acc;
                dot += acc * prow[j];
              }
              const T* qrow = qv.data() + (bi * nq + i) * d + h * dh;
              T* dqrow = dq.data() + (bi * nq + i) * d + h * dh;
              for (std::size_t j = 0; j < nk; ++j) {
                ds[j] = prow[j] * (dp[j] - dot) * scale_f;
                if (ds[j] == T(0)) continue;
                const T* krow = kv.data() + (bi * nk + j) * d + h * dh;
                T* dkrow = dk.data() + (bi * nk + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) {
                  dqrow[c] += ds[j] * krow[c];
                  dkrow[c] += ds[j] * qrow[c];
                }
              }
            }
        detail::accumulate(g, iq, dq);
        detail::accumulate(g, ik, dk);
        detail::accumulate(g, iv, dvv);
      });
}

/// Cross-correlation of x [B, Cin, L] with kernels [Cout, Cin, W]; optional bias [Cout].
template <class T>
Var<T> conv1d(Var<T> x, Var<T> kernels, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t stride,
              std::size_t padding) {
  detail::require_same_graph(x, kernels);
  const Shape &sx = x.shape(), &sw = kernels.shape();
  if (sx.size() != 3 || sw.size() != 3 || sx[1] != sw[1]) {
    throw DimensionError("conv1d channel mismatch: x" + shape_str(sx) + " kernels" + shape_str(sw));
  }
  if (stride == 0) throw ParameterError("conv1d stride must be positive");
  const std::size_t b = sx[0], cin = sx[1], len = sx[2], cout = sw[0], width = sw[2];
  if (bias && bias->shape() != Shape{cout}) {
    throw DimensionError("conv1d bias " + shape_str(bias->shape()) + " vs " + std::to_string(cout) + " channels");
  }
  const long padded = static_cast<long>(len + 2 * padding) - static_cast<long>(width);
  if (padded < 0) throw DimensionError("conv1d output length would be non-positive for input " + shape_str(sx));
  const std::size_t lout = static_cast<std::size_t>(padded) / stride + 1;
  const auto &xv = x.value(), &wv = kernels.value();
  std::vector<T> out(b * cout * lout, T(0));
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t t = 0; t < lout; ++t) {
        T acc = bias ? bias->value()[co] : T(0);
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t w = 0; w < width; ++w) {
            const long pos = static_cast<long>(t * stride + w) - static_cast<long>(padding);
            if (pos < 0 || pos >= static_cast<long>(len)) continue;
            acc += wv[(co * cin + ci) * width + w] * xv[(bi * cin + ci) * len + static_cast<std::size_t>(pos)];
          }
        out[(bi * cout + co) * lout + t] = acc;
      }
  std::vector<int> inputs{x.id, kernels.id};
  if (bias) inputs.push_back(bias->id);
  const int ix = x.id, iw = kernels.id, ib = bias ? bias->id : -1;
  return x.graph->push("conv1d", inputs, {b, cout, lout}, std::move(out), [=](Graph<T>& g, const auto& node) {
    const auto &xv = g.node(ix).value, &wv = g.node(iw).value;
    const auto& go = node.grad;
    std::vector<T> dx(xv.size(), T(0)), dw(wv.size(), T(0)), db(cout, T(0));
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t t = 0; t < lout; ++t) {
          const T gval = go[(bi * cout + co) * lout + t];
          db[co] += gval;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t w = 0; w < width; ++w) {
              const long pos = static_cast<long>(t * stride + w) - static_cast<long>(padding);
              if (pos < 0 || pos >= static_cast<long>(len)) continue;
              const std::size_t xi = (bi * cin + ci) * len + static_cast<std::size_t>(pos);
              const std::size_t wi = (co * cin + ci) * width + w;
              dw[wi] += gval * xv[xi];
              dx[xi] += gval * wv[wi];
            }
        }
    detail::accumulate(g, ix, dx);
    detail::accumulate(g, iw, dw);
    if (ib >= 0) detail::accumulate(g, ib, db);
  });
}

/// Feature-wise modulation of x [B, C, L]: x * (1 + scale) + shift with scale/shift [B, C].
template <class T>
Var<T> film(Var<T> x, Var<T> scale_v, Var<T> shift) {
  const Shape& sx = x.shape();
  if (sx.size() != 3 || scale_v.shape() != Shape{sx[0], sx[1]} || shift.shape() != Shape{sx[0], sx[1]}) {
    throw DimensionError("film shape mismatch: x" + shape_str(sx) + " scale" + shape_str(scale_v.shape()) +
                         " shift" + shape_str(shift.shape()));
  }
  const std::size_t bc = sx[0] * sx[1], len = sx[2];
  const auto &xv = x.value(), &sv = scale_v.value(), &hv = shift.value();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < bc; ++r)
    for (std::size_t t = 0; t < len; ++t) out[r * len + t] = xv[r * len + t] * (T(1) + sv[r]) + hv[r];
  const int ix = x.id, is = scale_v.id, ih = shift.id;
  return x.graph->push("film", {ix, is, ih}, sx, std::move(out), [=](Graph<T>& g, const auto& node) {
    const auto &xv = g.node(ix).value, &sv = g.node(is).value;
    const auto& go = node.grad;
    std::vector<T> dx(xv.size()), ds(bc, T(0)), dh(bc, T(0));
    for (std::size_t r = 0; r < bc; ++r)
      for (std::size_t t = 0; t < len; ++t) {
        const T gval = go[r * len + t];
        dx[r * len + t] = gval * (T(1) + sv[r]);
        ds[r] += gval * xv[r * len + t];
        dh[r] += gval;
      }
    detail::accumulate(g, ix, dx);
    detail::accumulate(g, is, ds);
    detail::accumulate(g, ih, dh);
  });
}

/// Mean squared error between two same-shape tensors.
template <class T>
Var<T> mse(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  return mean(square(sub(a, b)));
}

/// Mean binary cross-entropy on logits; positives are weighted by `pos_weight`.
template <class T>
Var<T> bce_with_logits(Var<T> logits, const std::vector<T>& labels, T pos_weight = T(1)) {
  if (labels.size() != logits.size()) {
    throw DimensionError("bce label count " + std::to_string(labels.size()) + " vs logits " +
                         shape_str(logits.shape()));
  }
  const auto& z = logits.value();
  const std::size_t n = z.size();
  T total = 0;
  auto softplus = [](T v) { return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
  for (std::size_t i = 0; i < n; ++i) {
    total += pos_weight * labels[i] * softplus(-z[i]) + (T(1) - labels[i]) * softplus(z[i]);
  }
  const int iz = logits.id;
  return logits.graph->push("bce_with_logits", {iz}, {}, {total / static_cast<T>(n)},
                            [iz, labels, pos_weight, n](Graph<T>& g, const auto& node) {
                              const auto& z = g.node(iz).value;
                              auto& gz = g.grad_of(iz);
                              for (std::size_t i = 0; i < n; ++i) {
                                const T s = T(1) / (T(1) + std::exp(-z[i]));
                                const T d = -pos_weight * labels[i] * (T(1) - s) + (T(1) - labels[i]) * s;
                                gz[i] += node.grad[0] * d / static_cast<T>(n);
                              }
                            });
}

}  // namespace difnav::gradcore
