#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "difnav/gradcore/gradcheck.hpp"
#include "difnav/trainer/model.hpp"

namespace difnav::trainer {

struct GradcheckLine {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckLine> lines;
  double tolerance = 1e-4;
  bool passed() const {
    for (const auto& l : lines)
      if (!l.passed) return false;
    return !lines.empty();
  }
};

inline std::string format_gradcheck(const GradcheckReport& r) {
  std::string s;
  for (const auto& l : r.lines)
    s += (l.passed ? "PASS " : "FAIL ") + l.name + " max_rel_error=" + format_double(l.max_rel_error) + "\n";
  s += std::string("overall=") + (r.passed() ? "PASS" : "FAIL") + " tolerance=" + format_double(r.tolerance) + "\n";
  return s;
}

namespace detail {

inline std::vector<double> normals(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

/// sum(y * w) with a fixed random weighting, so every output entry matters.
inline gradcore::Var<double> probe(gradcore::Graph<double>& g, gradcore::Var<double> y, const std::vector<double>& w) {
  return gradcore::sum(gradcore::mul(y, g.constant(y.shape(), std::vector<double>(w.begin(), w.begin() + y.size()))));
}

/// Reduced policy used for the end-to-end check.
inline PolicyConfig gradcheck_policy() {
  PolicyConfig c;
  c.encoder.d_model = 8;
  c.encoder.heads = 2;
  c.encoder.ffn_hidden = 12;
  c.encoder.pano_layers = 1;
  c.encoder.instr_layers = 1;
  c.encoder.cross_layers = 1;
  c.encoder.max_step_index = 8;
  c.denoiser.channels = 6;
  c.denoiser.blocks = 1;
  c.denoiser.time_dim = 4;
  c.denoiser.time_hidden = 8;
  c.progress.hidden = 6;
  c.progress.lambda = 0.5;
  return c.sync(), c;
}

}  // namespace detail

/// Finite-difference checks (64-bit) on every layer kind and on the full L_WP + lambda L_Dist.
inline GradcheckReport run_gradcheck_suite(std::uint64_t seed = 0, double tolerance = 1e-4) {
  using namespace gradcore;
  GradcheckReport report;
  report.tolerance = tolerance;
  Rng data(derive_seed(seed, "gradcheck"));
  const auto w = detail::normals(256, data);
  const auto x34 = detail::normals(12, data);
  const AttentionMask mask{{2, 3, 4}, {1, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 1, 0, 1, 0, 0, 1, 1, 1, 1, 1}};
  const std::vector<int> rows{2, -1, 0, 2};
  const std::vector<double> labels{1, 0, 1, 1, 0, 0};

  struct Case {
    std::string name;
    std::function<void(ParamStore<double>&, Rng&)> init;
    std::function<Var<double>(Graph<double>&)> loss;
  };
  std::vector<Case> cases{
      {"linear", [](auto& s, Rng& r) { add_linear(s, "l", 4, 3, r); },
       [&](Graph<double>& g) { return detail::probe(g, linear(g, "l", g.constant({3, 4}, x34)), w); }},
      {"activations(gelu,mish,sigmoid,relu)", [](auto& s, Rng& r) { s.add("p", normal_init<double>({12}, 1.0, r)); },
       [&](Graph<double>& g) {
         auto p = g.param("p");
         return detail::probe(g, add(add(gelu(p), mish(p)), add(sigmoid(p), relu(add(p, g.constant({12}, x34))))), w);
       }},
      {"layer_norm",
       [](auto& s, Rng& r) {
         s.add("x", normal_init<double>({3, 4}, 1.0, r));
         s.add("g", normal_init<double>({4}, 1.0, r));
         s.add("b", normal_init<double>({4}, 1.0, r));
       },
       [&](Graph<double>& g) { return detail::probe(g, layer_norm(g.param("x"), g.param("g"), g.param("b"), 1e-5), w); }},
      {"attention(masked,multi-head)",
       [](auto& s, Rng& r) {
         s.add("q", normal_init<double>({2, 3, 4}, 1.0, r));
         s.add("k", normal_init<double>({2, 4, 4}, 1.0, r));
         s.add("v", normal_init<double>({2, 4, 2}, 1.0, r));
       },
       [&](Graph<double>& g) { return detail::probe(g, attention(g.param("q"), g.param("k"), g.param("v"), &mask, 2), w); }},
      {"conv1d+film",
       [](auto& s, Rng& r) {
         s.add("x", normal_init<double>({2, 3, 5}, 1.0, r));
         s.add("w", normal_init<double>({2, 3, 3}, 1.0, r));
         s.add("b", normal_init<double>({2}, 1.0, r));
         s.add("sc", normal_init<double>({2, 2}, 0.5, r));
         s.add("sh", normal_init<double>({2, 2}, 0.5, r));
       },
       [&](Graph<double>& g) {
         return detail::probe(g, film(conv1d(g.param("x"), g.param("w"), g.param("b"), 2, 1), g.param("sc"), g.param("sh")), w);
       }},
      {"concat+slice+mean_axis+reshape",
       [](auto& s, Rng& r) {
         s.add("a", normal_init<double>({2, 2, 3}, 1.0, r));
         s.add("b", normal_init<double>({2, 1, 3}, 1.0, r));
       },
       [&](Graph<double>& g) {
         auto c = concat<double>({g.param("a"), g.param("b")}, 1);
         return detail::probe(g, mul(mean_axis(c, 1), reshape(slice(c, 1, 2, 1), {2, 3})), w);
       }},
      {"gather_rows(fallback)",
       [](auto& s, Rng& r) {
         s.add("table", normal_init<double>({3, 4}, 1.0, r));
         s.add("pad", normal_init<double>({4}, 1.0, r));
       },
       [&](Graph<double>& g) {
         return detail::probe(g, square(gather_rows(g.param("table"), std::span<const int>(rows), g.param("pad"))), w);
       }},
      {"mse+bce_with_logits",
       [](auto& s, Rng& r) {
         s.add("a", normal_init<double>({6}, 1.0, r));
         s.add("b", normal_init<double>({6}, 1.0, r));
       },
       [&](Graph<double>& g) { return add(mse(g.param("a"), g.param("b")), bce_with_logits(g.param("a"), labels, 3.0)); }},
      {"transformer_block",
       [](auto& s, Rng& r) {
         add_self_block_params(s, "blk", 4, 8, r);
         s.add("x", normal_init<double>({2, 3, 4}, 1.0, r));
       },
       [&](Graph<double>& g) { return detail::probe(g, self_block(g, "blk", g.param("x"), nullptr, 2, Activation::kGelu), w); }},
  };
  for (const auto& c : cases) {
    ParamStore<double> store;
    Rng rng(derive_seed(seed, c.name));
    c.init(store, rng);
    const double e = check_gradients(store, c.loss, 1e-3).max_rel_error();
    report.lines.push_back({c.name, e, e < tolerance});
  }

  // End to end: encoder -> denoiser loss + lambda * distance loss, with frozen (k, eps) draws.
  const PolicyConfig pc = detail::gradcheck_policy();
  ParamStore<double> store;
  Rng init(derive_seed(seed, "e2e"));
  encoder::add_encoder_params(store, pc.encoder, init);
  diffpolicy::add_denoiser_params(store, pc.denoiser, init);
  progress::add_progress_params(store, pc.progress, init);
  for (auto& [name, t] : store)
    for (auto& v : t.data) v += 0.1 * standard_normal(init);
  navsim::GridWorld room(10, 10, navsim::Category::kOpenArea);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) room.set_occupied({x, y}, x == 0 || y == 0 || x == 9 || y == 9 || (x == 5 && y > 3));
  std::vector<StateInput> states(2);
  for (std::size_t i = 0; i < states.size(); ++i) {
    Track track;
    for (int t = 0; t < static_cast<int>(i) + 2; ++t) {
      const Pose p({0.4 + 0.3 * t + 0.2 * static_cast<double>(i), 0.6 + 0.25 * t}, 3 * t + 1);
      track.push(navsim::render_panorama(room, p), p.position, t);
    }
    std::vector<int> tokens;
    for (int k = 0; k < 4 + static_cast<int>(i); ++k) tokens.push_back(uniform_int(data, 0, static_cast<int>(pc.encoder.vocab_size) - 1));
    states[i] = track.state(tokens, Pose({0.9, 1.1}, 5), pc.encoder.history);
  }
  const std::vector<const StateInput*> ptrs{&states[0], &states[1]};
  const auto a0 = detail::normals(4, data);
  const std::vector<int> ks{3, 9};
  const auto eps = detail::normals(4, data);
  const auto schedule = diffpolicy::build_schedule(pc.diffusion_steps, pc.schedule_offset);
  auto loss = [&](Graph<double>& g) {
    auto s = encoder::encode_states(g, pc.encoder, ptrs);
    auto wp = diffpolicy::bc_loss_with(g, pc.denoiser, schedule, s, a0, ks, eps);
    return add(wp, progress::distance_loss(g, pc.progress, s, {0.7, 0.2}, {0.0, 1.0}));
  };
  const auto res = check_gradients(store, loss, 1e-5, 12, seed);
  Graph<double> g(&store);
  const auto grads = backward(g, loss(g));
  double worst = 0.0;
  bool ok = true;
  for (const auto& e : res.entries) {
    if (e.name.ends_with(".k.b")) {
      // Softmax ignores a key bias: the exact gradient is zero, so check that rather than a ratio of noise.
      for (double v : grads.at(e.name)) ok = ok && std::abs(v) < 1e-10;
      continue;
    }
    worst = std::max(worst, e.rel_error);
  }
  report.lines.push_back({"end_to_end(L_WP+lambda*L_Dist)", worst, ok && worst < tolerance});
  return report;
}

}  // namespace difnav::trainer
