#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/gradcore/layers.hpp"
#include "difnav/navsim/motion.hpp"
#include "difnav/navsim/panorama.hpp"

namespace difnav::encoder {

using gradcore::Activation;
using gradcore::AttentionMask;
using gradcore::Graph;
using gradcore::ParamStore;
using gradcore::Shape;
using gradcore::Var;
using navsim::PanoObservation;
using navsim::Pose;
using navsim::Vec2;

inline constexpr std::size_t kViews = navsim::kViews;
inline constexpr std::size_t kDepthCenters = 8;
inline constexpr std::size_t kDepthFeatures = 1 + kDepthCenters;
inline constexpr std::size_t kGeometryFeatures = 3;

enum class TokenType { kInstruction = 0, kTrajectory = 1, kObservation = 2 };

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t pano_layers = 2;
  std::size_t instr_layers = 2;
  std::size_t cross_layers = 2;
  std::size_t history = 3;
  std::size_t vocab_size = 56;
  std::size_t max_tokens = 32;
  std::size_t max_step_index = 64;  // step embeddings beyond this index reuse the last row
  Activation activation = Activation::kGelu;
};

/// One past (or the current) decision point as seen from the current pose.
struct HistoryEntry {
  PanoObservation obs;
  double distance = 0.0;  // meters to the current pose
  double sin_theta = 0.0;
  double cos_theta = 1.0;
  int step = 0;
};

/// Encoder input for one decision: instruction ids and 1..H history entries, oldest first.
/// The last entry is the current observation.
struct StateInput {
  std::vector<int> tokens;
  std::vector<HistoryEntry> history;
};

/// Relative geometry of a past position in the frame of `current`.
inline HistoryEntry make_entry(const PanoObservation& obs, Vec2 position, int step, const Pose& current) {
  HistoryEntry e;
  e.obs = obs;
  e.step = step;
  const Vec2 rel = navsim::world_to_agent(current, position - current.position);
  e.distance = std::hypot(rel.x, rel.y);
  if (e.distance > 1e-12) {
    e.sin_theta = rel.y / e.distance;
    e.cos_theta = rel.x / e.distance;
  }
  return e;
}

template <class T>
void add_encoder_params(ParamStore<T>& s, const EncoderConfig& c, Rng& rng) {
  using gradcore::add_linear;
  using gradcore::add_norm;
  const std::size_t d = c.d_model;
  add_linear(s, "enc.obs.sem", navsim::kSemanticClasses, d, rng);
  add_norm(s, "enc.obs.sem_ln", d);
  add_linear(s, "enc.obs.depth", kDepthFeatures, d, rng);
  add_norm(s, "enc.obs.depth_ln", d);
  add_linear(s, "enc.obs.angle", 2, d, rng);
  add_norm(s, "enc.obs.angle_ln", d);
  for (std::size_t l = 0; l < c.pano_layers; ++l)
    gradcore::add_self_block_params(s, "enc.pano." + std::to_string(l), d, c.ffn_hidden, rng);
  add_norm(s, "enc.pano.ln_f", d);

  s.add("enc.tok", gradcore::normal_init<T>({c.vocab_size, d}, 0.02, rng));
  s.add("enc.pos", gradcore::normal_init<T>({c.max_tokens, d}, 0.02, rng));
  s.add("enc.type", gradcore::normal_init<T>({3, d}, 0.02, rng));
  for (std::size_t l = 0; l < c.instr_layers; ++l)
    gradcore::add_self_block_params(s, "enc.instr." + std::to_string(l), d, c.ffn_hidden, rng);
  add_norm(s, "enc.instr.ln_f", d);

  add_linear(s, "enc.hist.geo", kGeometryFeatures, d, rng);
  add_norm(s, "enc.hist.geo_ln", d);
  s.add("enc.hist.step", gradcore::normal_init<T>({c.max_step_index, d}, 0.02, rng));
  s.add("enc.hist.start", gradcore::normal_init<T>({d}, 0.02, rng));

  for (std::size_t l = 0; l < c.cross_layers; ++l) {
    const std::string p = "enc.x." + std::to_string(l);
    add_norm(s, p + ".ln_q", d);
    add_norm(s, p + ".ln_kv", d);
    gradcore::add_attention_params(s, p + ".cross", d, rng);
    gradcore::add_self_block_params(s, p + ".self", d, c.ffn_hidden, rng);
  }
  add_norm(s, "enc.x.ln_f", d);
}

/// Normalized depth followed by Gaussian bumps at evenly spaced centers in [0, 1].
inline std::vector<double> depth_features(double depth, double max_range) {
  const double x = std::clamp(depth / max_range, 0.0, 1.0);
  const double width = 1.0 / static_cast<double>(kDepthCenters);
  std::vector<double> f{x};
  for (std::size_t i = 0; i < kDepthCenters; ++i) {
    const double c = static_cast<double>(i) / static_cast<double>(kDepthCenters - 1);
    f.push_back(std::exp(-0.5 * (x - c) * (x - c) / (width * width)));
  }
  return f;
}

template <class T>
Var<T> type_row(Graph<T>& g, TokenType t) {
  return gradcore::reshape(gradcore::slice(g.param("enc.type"), 0, static_cast<std::size_t>(t), 1),
                           Shape{g.params()->get("enc.type").shape[1]});
}

/// Per-view embeddings of N observations: [N, 12, d].
template <class T>
Var<T> embed_observations(Graph<T>& g, const EncoderConfig& c, const std::vector<const PanoObservation*>& obs) {
  using namespace gradcore;
  const std::size_t n = obs.size();
  std::vector<T> sem(n * kViews * navsim::kSemanticClasses, T(0));
  std::vector<T> dep;
  dep.reserve(n * kViews * kDepthFeatures);
  std::vector<T> ang;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t v = 0; v < kViews; ++v) {
      const auto& r = obs[i]->views[v];
      if (r.semantic < 0 || r.semantic >= navsim::kSemanticClasses)
        throw ContractError("semantic class out of range: " + std::to_string(r.semantic));
      sem[(i * kViews + v) * navsim::kSemanticClasses + static_cast<std::size_t>(r.semantic)] = T(1);
      for (double f : depth_features(r.depth, obs[i]->max_range)) dep.push_back(static_cast<T>(f));
      ang.push_back(static_cast<T>(r.sin_heading));
      ang.push_back(static_cast<T>(r.cos_heading));
    }
  const std::size_t rows = n * kViews;
  Var<T> e_sem = norm(g, "enc.obs.sem_ln", linear(g, "enc.obs.sem", g.constant({rows, navsim::kSemanticClasses}, sem)));
  Var<T> e_dep = norm(g, "enc.obs.depth_ln", linear(g, "enc.obs.depth", g.constant({rows, kDepthFeatures}, dep)));
  Var<T> e_ang = norm(g, "enc.obs.angle_ln", linear(g, "enc.obs.angle", g.constant({rows, 2}, ang)));
  return reshape(add(add(e_sem, e_dep), e_ang), Shape{n, kViews, c.d_model});
}

template <class T>
Var<T> embed_observation(Graph<T>& g, const EncoderConfig& c, const PanoObservation& obs) {
  return embed_observations(g, c, {&obs});
}

/// Self-attention over the 12 view tokens of each observation: [N, 12, d] -> [N, 12, d].
template <class T>
Var<T> panorama_encode(Graph<T>& g, const EncoderConfig& c, Var<T> e) {
  for (std::size_t l = 0; l < c.pano_layers; ++l)
    e = gradcore::self_block(g, "enc.pano." + std::to_string(l), e, nullptr, c.heads, c.activation);
  return gradcore::norm(g, "enc.pano.ln_f", e);
}

/// Key mask [B, rows, Lmax] admitting the first lengths[b] keys of each batch item.
inline AttentionMask length_mask(const std::vector<std::size_t>& lengths, std::size_t rows, std::size_t lmax) {
  AttentionMask m{Shape{lengths.size(), rows, lmax}, std::vector<std::uint8_t>(lengths.size() * rows * lmax, 0)};
  for (std::size_t b = 0; b < lengths.size(); ++b)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < std::min(lengths[b], lmax); ++j) m.allowed[(b * rows + r) * lmax + j] = 1;
  return m;
}

struct InstructionBatch {
  std::vector<std::size_t> lengths;
  std::size_t max_len = 0;
};

/// Token representations [B, Lmax, d]; rows past an item's length are padding.
template <class T>
Var<T> encode_instructions(Graph<T>& g, const EncoderConfig& c, const std::vector<const std::vector<int>*>& tokens,
                           InstructionBatch* info = nullptr) {
  using namespace gradcore;
  InstructionBatch ib;
  for (const auto* t : tokens) {
    if (t->empty() || t->size() > c.max_tokens)
      throw VocabularyError("instruction length " + std::to_string(t->size()) + " outside 1.." +
                            std::to_string(c.max_tokens));
    ib.lengths.push_back(t->size());
    ib.max_len = std::max(ib.max_len, t->size());
  }
  const std::size_t b = tokens.size(), lmax = ib.max_len;
  std::vector<int> ids(b * lmax, 0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < tokens[i]->size(); ++j) {
      const int id = (*tokens[i])[j];
      if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size)
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(c.vocab_size));
      ids[i * lmax + j] = id;
    }
  Var<T> x = reshape(gather_rows(g.param("enc.tok"), std::span<const int>(ids)), Shape{b, lmax, c.d_model});
  x = add(x, slice(g.param("enc.pos"), 0, 0, lmax));
  x = add(x, type_row(g, TokenType::kInstruction));
  const AttentionMask mask = length_mask(ib.lengths, lmax, lmax);
  for (std::size_t l = 0; l < c.instr_layers; ++l)
    x = self_block(g, "enc.instr." + std::to_string(l), x, &mask, c.heads, c.activation);
  if (info) *info = ib;
  return norm(g, "enc.instr.ln_f", x);
}

template <class T>
Var<T> encode_instruction(Graph<T>& g, const EncoderConfig& c, const std::vector<int>& tokens) {
  return encode_instructions(g, c, {&tokens});
}

/// Trajectory tokens [B, H, d] from pooled panorama embeddings.
///
/// `pooled` holds Avg(O') of every entry [N, d]; `entries[b]` lists the rows of batch item b
/// (oldest first) together with their geometry. Short histories are left-padded with the
/// learned start token.
template <class T>
Var<T> encode_history(Graph<T>& g, const EncoderConfig& c, Var<T> pooled,
                      const std::vector<std::vector<const HistoryEntry*>>& entries) {
  using namespace gradcore;
  const std::size_t h = c.history;
  std::vector<T> geo;
  std::vector<int> steps, rows;
  int next = 0;
  for (const auto& list : entries) {
    if (list.empty()) throw ContractError("history must contain the current observation");
    if (list.size() > h)
      throw ContractError("history of " + std::to_string(list.size()) + " exceeds H=" + std::to_string(h));
    for (std::size_t k = list.size(); k < h; ++k) rows.push_back(-1);
    for (const HistoryEntry* e : list) {
      if (!(e->distance >= 0.0)) throw ContractError("history distance must be >= 0");
      geo.push_back(static_cast<T>(e->distance));
      geo.push_back(static_cast<T>(e->sin_theta));
      geo.push_back(static_cast<T>(e->cos_theta));
      steps.push_back(std::clamp(e->step, 0, static_cast<int>(c.max_step_index) - 1));
      rows.push_back(next++);
    }
  }
  if (pooled.shape() != Shape{static_cast<std::size_t>(next), c.d_model})
    throw DimensionError("pooled history " + shape_str(pooled.shape()) + " does not match " + std::to_string(next) +
                         " entries");
  const std::size_t n = static_cast<std::size_t>(next);
  Var<T> geom = norm(g, "enc.hist.geo_ln", linear(g, "enc.hist.geo", g.constant({n, kGeometryFeatures}, geo)));
  Var<T> step = gather_rows(g.param("enc.hist.step"), std::span<const int>(steps));
  Var<T> tok = add(add(pooled, geom), step);
  Var<T> out = gather_rows(tok, std::span<const int>(rows), g.param("enc.hist.start"));
  return reshape(out, Shape{entries.size(), h, c.d_model});
}

/// Fuses trajectory [B, H, d], instruction [B, L, d] and current views [B, 12, d] into S_t [B, d].
template <class T>
Var<T> cross_modal(Graph<T>& g, const EncoderConfig& c, Var<T> traj, Var<T> instr, Var<T> views,
                   const AttentionMask* instr_mask) {
  using namespace gradcore;
  const std::size_t b = traj.shape()[0], h = traj.shape()[1], nv = views.shape()[1];
  traj = add(traj, type_row(g, TokenType::kTrajectory));
  views = add(views, type_row(g, TokenType::kObservation));
  for (std::size_t l = 0; l < c.cross_layers; ++l) {
    const std::string p = "enc.x." + std::to_string(l);
    traj = add(traj, multi_head_attention(g, p + ".cross", norm(g, p + ".ln_q", traj), norm(g, p + ".ln_kv", instr),
                                          instr_mask, c.heads));
    Var<T> x = self_block(g, p + ".self", concat<T>({views, traj}, 1), nullptr, c.heads, c.activation);
    views = slice(x, 1, 0, nv);
    traj = slice(x, 1, nv, h);
  }
  return reshape(norm(g, "enc.x.ln_f", slice(traj, 1, h - 1, 1)), Shape{b, c.d_model});
}

/// Full encoder over a batch of decision states: S_t [B, d].
template <class T>
Var<T> encode_states(Graph<T>& g, const EncoderConfig& c, const std::vector<const StateInput*>& batch) {
  using namespace gradcore;
  if (batch.empty()) throw ContractError("empty encoder batch");
  std::vector<const PanoObservation*> obs;
  std::vector<std::vector<const HistoryEntry*>> entries;
  std::vector<const std::vector<int>*> tokens;
  std::vector<int> current;
  for (const StateInput* s : batch) {
    if (s->history.empty()) throw ContractError("history must contain the current observation");
    entries.emplace_back();
    for (const auto& e : s->history) {
      obs.push_back(&e.obs);
      entries.back().push_back(&e);
    }
    current.push_back(static_cast<int>(obs.size()) - 1);
    tokens.push_back(&s->tokens);
  }
  InstructionBatch ib;
  Var<T> instr = encode_instructions(g, c, tokens, &ib);
  Var<T> views = panorama_encode(g, c, embed_observations(g, c, obs));
  Var<T> pooled = mean_axis(views, 1);
  Var<T> traj = encode_history(g, c, pooled, entries);
  const std::size_t n = obs.size();
  Var<T> cur = reshape(gather_rows(reshape(views, Shape{n, kViews * c.d_model}), std::span<const int>(current)),
                       Shape{batch.size(), kViews, c.d_model});
  const AttentionMask mask = length_mask(ib.lengths, c.history, ib.max_len);
  return cross_modal(g, c, traj, instr, cur, &mask);
}

template <class T>
Var<T> encode_state(Graph<T>& g, const EncoderConfig& c, const StateInput& s) {
  return encode_states(g, c, {&s});
}

}  // namespace difnav::encoder
