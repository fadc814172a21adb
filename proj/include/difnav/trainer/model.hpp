#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "difnav/diffpolicy/policy.hpp"
#include "difnav/encoder/encoder.hpp"
#include "difnav/gradcore/checkpoint.hpp"
#include "difnav/instructgen/dataset.hpp"
#include "difnav/progress/progress.hpp"

namespace difnav::trainer {

using encoder::HistoryEntry;
using encoder::StateInput;
using gradcore::Graph;
using gradcore::ParamStore;
using gradcore::Var;
using navsim::GridWorld;
using navsim::PanoObservation;
using navsim::Pose;
using navsim::Vec2;

using Scalar = float;

struct PolicyConfig {
  encoder::EncoderConfig encoder;
  diffpolicy::DenoiserConfig denoiser;
  progress::ProgressConfig progress;
  int diffusion_steps = 10;
  double schedule_offset = 0.008;
  int interval = 2;  // sparse waypoint interval n
  bool regression = false;  // MSE regression head in place of the diffusion head

  double action_scale() const { return instructgen::action_scale(interval); }

  /// Propagates shared widths so the sub-configs agree.
  PolicyConfig& sync() {
    denoiser.cond_dim = encoder.d_model;
    progress.in_dim = encoder.d_model;
    return *this;
  }

  /// Architecture keys stored in checkpoints; a mismatch on load is an incompatibility.
  std::map<std::string, std::string> architecture() const {
    return {{"d_model", std::to_string(encoder.d_model)},
            {"heads", std::to_string(encoder.heads)},
            {"ffn_hidden", std::to_string(encoder.ffn_hidden)},
            {"layers", std::to_string(encoder.pano_layers) + "/" + std::to_string(encoder.instr_layers) + "/" +
                           std::to_string(encoder.cross_layers)},
            {"history", std::to_string(encoder.history)},
            {"vocab", std::to_string(encoder.vocab_size)},
            {"conv_layers", std::to_string(denoiser.conv_layers())},
            {"channels", std::to_string(denoiser.channels)},
            {"horizon", std::to_string(denoiser.horizon)},
            {"denoiser_activation", denoiser.activation == gradcore::Activation::kMish ? "mish" : "gelu"},
            {"stop_mode", std::string(progress::stop_mode_name(progress.mode))},
            {"progress_hidden", std::to_string(progress.hidden)},
            {"head", regression ? "regression" : "diffusion"}};
  }
};

struct Policy {
  PolicyConfig cfg;
  diffpolicy::NoiseSchedule schedule;
  ParamStore<Scalar> params;
};

inline Policy make_policy(PolicyConfig cfg, std::uint64_t seed) {
  cfg.sync();
  Policy p;
  p.cfg = cfg;
  p.schedule = diffpolicy::build_schedule(cfg.diffusion_steps, cfg.schedule_offset);
  Rng rng(derive_seed(seed, "init"));
  encoder::add_encoder_params(p.params, cfg.encoder, rng);
  if (cfg.regression)
    diffpolicy::add_regression_params(p.params, cfg.denoiser, rng);
  else
    diffpolicy::add_denoiser_params(p.params, cfg.denoiser, rng);
  progress::add_progress_params(p.params, cfg.progress, rng);
  return p;
}

inline void save_policy(const std::filesystem::path& path, const Policy& p, const std::string& stage) {
  gradcore::Checkpoint<Scalar> ck;
  ck.meta = p.cfg.architecture();
  ck.meta["stage"] = stage;
  ck.params = p.params;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  gradcore::save_checkpoint(path, ck);
}

/// Loads parameters into a policy built from `cfg`; architecture keys and tensor shapes must match.
inline Policy load_policy(const std::filesystem::path& path, PolicyConfig cfg) {
  cfg.sync();
  auto ck = gradcore::load_checkpoint<Scalar>(path);
  for (const auto& [k, v] : cfg.architecture()) {
    const auto it = ck.meta.find(k);
    if (it == ck.meta.end() || it->second != v)
      throw VersionError("checkpoint " + path.string() + " has " + k + "=" +
                         (it == ck.meta.end() ? std::string("<missing>") : it->second) + ", config expects " + v);
  }
  Policy p = make_policy(cfg, 0);
  if (ck.params.size() != p.params.size()) throw VersionError("checkpoint parameter count differs from config");
  for (auto& [name, t] : p.params) {
    if (!ck.params.contains(name)) throw VersionError("checkpoint lacks parameter " + name);
    const auto& src = ck.params.get(name);
    if (src.shape != t.shape) throw VersionError("checkpoint shape mismatch for " + name);
    t.data = src.data;
  }
  return p;
}

/// One supervised decision: encoder inputs plus the expert label.
struct StepRecord {
  std::vector<int> tokens;
  std::vector<HistoryEntry> history;
  std::vector<double> action;  // normalized, x block then y block
  double distance = 1.0;       // normalized remaining geodesic distance
  double reached = 0.0;        // 1 when within the reach radius
  int round = 0;               // 0 for original demos, r for DAgger round r
};

/// Decision history of one rollout; builds encoder inputs relative to the current pose.
class Track {
 public:
  void push(const PanoObservation& obs, Vec2 position, int step) { items_.push_back({obs, position, step}); }
  std::size_t size() const { return items_.size(); }

  StateInput state(const std::vector<int>& tokens, const Pose& current, std::size_t history) const {
    if (items_.empty()) throw ContractError("track has no observation yet");
    StateInput s;
    s.tokens = tokens;
    const std::size_t first = items_.size() > history ? items_.size() - history : 0;
    for (std::size_t i = first; i < items_.size(); ++i)
      s.history.push_back(encoder::make_entry(items_[i].obs, items_[i].position, items_[i].step, current));
    return s;
  }

 private:
  struct Item {
    PanoObservation obs;
    Vec2 position;
    int step;
  };
  std::vector<Item> items_;
};

/// Labels for a pose: normalized distance and the reached flag.
inline std::pair<double, double> progress_labels(const navsim::DistanceField& goal_field, Vec2 p, double initial,
                                                 const progress::ProgressConfig& pc) {
  const auto nd = progress::normalized_distance(goal_field, p, initial);
  const auto geo = goal_field.distance_from(p);
  return {nd.value, geo && *geo < pc.reach_radius ? 1.0 : 0.0};
}

/// BC records along the sparse demo of an episode.
inline std::vector<StepRecord> demo_records(const instructgen::Episode& ep, const GridWorld& grid,
                                            const PolicyConfig& cfg) {
  const auto actions = instructgen::sparse_actions(ep.demo);
  const navsim::DistanceField field(grid, ep.goal);
  std::vector<StepRecord> out;
  Track track;
  for (std::size_t i = 0; i < ep.demo.sparse.size(); ++i) {
    const Pose& p = ep.demo.sparse[i];
    track.push(navsim::render_panorama(grid, p), p.position, static_cast<int>(i));
    StepRecord r;
    const StateInput s = track.state(ep.instruction.tokens, p, cfg.encoder.history);
    r.tokens = s.tokens;
    r.history = s.history;
    r.action = diffpolicy::normalize({actions[i]}, cfg.action_scale());
    std::tie(r.distance, r.reached) = progress_labels(field, p.position, ep.initial_geodesic, cfg.progress);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<StepRecord> dataset_records(const instructgen::Dataset& ds, instructgen::Split split,
                                               const PolicyConfig& cfg) {
  std::vector<StepRecord> out;
  for (const auto* e : ds.split(split)) {
    auto r = demo_records(*e, ds.grid_of(*e), cfg);
    out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  return out;
}

struct LossParts {
  Var<Scalar> total, wp, dist;
};

/// L_WP + lambda L_Dist over a batch of records.
inline LossParts policy_loss(Graph<Scalar>& g, const Policy& p, const std::vector<const StepRecord*>& batch,
                             Rng& rng) {
  std::vector<StateInput> inputs(batch.size());
  std::vector<const StateInput*> ptrs;
  std::vector<double> a0, dist, reached;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    inputs[i].tokens = batch[i]->tokens;
    inputs[i].history = batch[i]->history;
    ptrs.push_back(&inputs[i]);
    a0.insert(a0.end(), batch[i]->action.begin(), batch[i]->action.end());
    dist.push_back(batch[i]->distance);
    reached.push_back(batch[i]->reached);
  }
  Var<Scalar> s = encoder::encode_states(g, p.cfg.encoder, ptrs);
  Var<Scalar> wp =
      p.cfg.regression
          ? gradcore::mse(diffpolicy::regress_action(g, s),
                          g.constant({batch.size(), p.cfg.denoiser.action_size()}, std::vector<Scalar>(a0.begin(), a0.end())))
          : diffpolicy::bc_loss(g, p.cfg.denoiser, p.schedule, s, a0, rng);
  Var<Scalar> d = progress::distance_loss(g, p.cfg.progress, s, dist, reached);
  return {gradcore::add(wp, d), wp, d};
}

struct Decision {
  Vec2 displacement;  // agent frame, meters
  double score = 1.0; // progress head output
};

/// Encodes the states, reads the progress head and samples one waypoint per state.
inline std::vector<Decision> decide(const Policy& p, const std::vector<const StateInput*>& states, Rng& rng,
                                    diffpolicy::SampleTrace* trace = nullptr) {
  Graph<Scalar> g(&p.params, false);
  Var<Scalar> s = encoder::encode_states(g, p.cfg.encoder, states);
  const auto scores = progress::progress_score(g, p.cfg.progress, s).value();
  std::vector<Vec2> acts;
  if (p.cfg.regression) {
    const auto out = diffpolicy::regress_action(g, s).value();
    const std::size_t a = p.cfg.denoiser.action_size();
    for (std::size_t i = 0; i < states.size(); ++i)
      acts.push_back(diffpolicy::denormalize(std::vector<double>(out.begin() + a * i, out.begin() + a * (i + 1)),
                                             p.cfg.denoiser.horizon, p.cfg.action_scale())
                         .front());
  } else {
    acts = diffpolicy::sample_action(p.params, p.cfg.denoiser, p.schedule, s.value(), p.cfg.action_scale(), rng, trace);
  }
  std::vector<Decision> out;
  for (std::size_t i = 0; i < states.size(); ++i) out.push_back({acts[i], scores[i]});
  return out;
}

inline Decision decide(const Policy& p, const StateInput& s, Rng& rng) { return decide(p, {&s}, rng).front(); }

}  // namespace difnav::trainer
