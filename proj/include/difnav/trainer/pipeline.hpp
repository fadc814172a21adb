#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "difnav/core/text.hpp"
#include "difnav/gradcore/optimizer.hpp"
#include "difnav/trainer/expert.hpp"
#include "difnav/trainer/model.hpp"

namespace difnav::trainer {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-2;
  std::size_t batch = 64;
  int epochs = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0) || batch == 0 || epochs < 1) throw ParameterError("training lr, batch and epochs must be positive");
  }
};

struct DaggerConfig {
  double alpha = 0.25;  // probability of executing the expert action
  int rounds = 5;
  double expert_radius = 1.0;
  CandidateSpec candidates;
  bool finetune_with_demos = true;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("DAgger alpha must lie in [0, 1]");
    if (rounds < 1) throw ParameterError("DAgger rounds must be >= 1");
    if (!(expert_radius > 0.0)) throw ParameterError("expert radius must be > 0");
  }
};

/// Draws p ~ U(0, 1) per decision; the expert acts unless p > alpha.
class MixingGate {
 public:
  MixingGate(double alpha, std::uint64_t seed) : alpha_(alpha), rng_(seed) {}
  bool expert_turn() { return !(uniform01(rng_) > alpha_); }

 private:
  double alpha_;
  Rng rng_;
};

struct EpochLog {
  std::string stage;
  int epoch = 0;
  double loss_wp = 0.0;
  double loss_dist = 0.0;
  std::size_t examples = 0;
};

using LogSink = std::function<void(const std::string&)>;

inline std::string format_epoch(const EpochLog& e) {
  return "stage=" + e.stage + " epoch=" + std::to_string(e.epoch) + " loss_wp=" + format_double(e.loss_wp) +
         " loss_dist=" + format_double(e.loss_dist) + " examples=" + std::to_string(e.examples);
}

/// One AdamW step on the mean loss of `batch`; returns (L_WP, lambda L_Dist).
inline std::pair<double, double> update_step(Policy& p, gradcore::OptimizerState<Scalar>& opt,
                                             const std::vector<const StepRecord*>& batch, Rng& rng,
                                             const std::string& where) {
  Graph<Scalar> g(&p.params);
  const LossParts loss = policy_loss(g, p, batch, rng);
  const double total = loss.total.item();
  if (!std::isfinite(total))
    throw NonFiniteError("non-finite loss at " + where + ": L_WP=" + format_double(loss.wp.item()) +
                         " L_Dist=" + format_double(loss.dist.item()));
  gradcore::optimizer_step(p.params, gradcore::backward(g, loss.total), opt);
  return {loss.wp.item(), loss.dist.item()};
}

inline gradcore::OptimizerState<Scalar> make_optimizer(const TrainConfig& tc) {
  gradcore::OptimizerState<Scalar> opt;
  opt.config.lr = tc.lr;
  opt.config.weight_decay = tc.weight_decay;
  return opt;
}

/// Minibatch epochs over `records`, reshuffled each epoch by a seeded stream.
inline std::vector<EpochLog> train_records(Policy& p, const std::vector<const StepRecord*>& records,
                                           const TrainConfig& tc, const std::string& stage,
                                           const LogSink& log = {}) {
  tc.validate();
  if (records.empty()) throw ContractError("cannot train on an empty record set");
  auto opt = make_optimizer(tc);
  std::vector<EpochLog> logs;
  std::vector<std::size_t> order(records.size());
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    Rng rng(derive_seed(derive_seed(tc.seed, stage), static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog e{stage, epoch, 0.0, 0.0, records.size()};
    for (std::size_t start = 0; start < order.size(); start += tc.batch) {
      std::vector<const StepRecord*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + tc.batch); ++i) batch.push_back(records[order[i]]);
      const auto [wp, d] = update_step(p, opt, batch, rng, stage + " epoch " + std::to_string(epoch));
      e.loss_wp += wp * static_cast<double>(batch.size()) / static_cast<double>(records.size());
      e.loss_dist += d * static_cast<double>(batch.size()) / static_cast<double>(records.size());
    }
    if (log) log(format_epoch(e));
    logs.push_back(e);
  }
  return logs;
}

inline std::vector<const StepRecord*> pointers(const std::vector<StepRecord>& v) {
  std::vector<const StepRecord*> out;
  for (const auto& r : v) out.push_back(&r);
  return out;
}

/// Behavior cloning on the sparse demos of the training split.
inline std::vector<EpochLog> train_bc(Policy& p, const instructgen::Dataset& ds, const TrainConfig& tc,
                                      const LogSink& log = {}) {
  const auto records = dataset_records(ds, instructgen::Split::kTrain, p.cfg);
  return train_records(p, pointers(records), tc, "bc", log);
}

struct RolloutStats {
  std::size_t decisions = 0;
  std::size_t expert_decisions = 0;
  int collisions = 0;
  double final_error = 0.0;
};

struct RoundResult {
  std::vector<StepRecord> records;  // buffer delta
  std::vector<RolloutStats> episodes;
  double loss_wp = 0.0;
  double loss_dist = 0.0;

  double expert_fraction() const {
    std::size_t d = 0, e = 0;
    for (const auto& s : episodes) {
      d += s.decisions;
      e += s.expert_decisions;
    }
    return d ? static_cast<double>(e) / static_cast<double>(d) : 0.0;
  }
};

/// One mixed rollout labelled by the expert at every visited state.
inline RolloutStats dagger_episode(const Policy& p, const instructgen::Episode& ep, const GridWorld& grid,
                                   const DaggerConfig& dc, MixingGate& gate, Rng& rng, int round,
                                   std::vector<StepRecord>& out) {
  RolloutStats st;
  const navsim::DistanceField goal_field(grid, ep.goal);
  const double max_step = p.cfg.action_scale();
  Track track;
  Pose pose = ep.start;
  for (int decision = 1; decision <= p.cfg.progress.max_decisions; ++decision) {
    track.push(navsim::render_panorama(grid, pose), pose.position, decision - 1);
    const StateInput s = track.state(ep.instruction.tokens, pose, p.cfg.encoder.history);
    const ExpertAction ex =
        expert_action(grid, pose, ep.demo.sparse, ep.goal, goal_field, dc.expert_radius, max_step, dc.candidates);
    StepRecord r;
    r.tokens = s.tokens;
    r.history = s.history;
    r.action = diffpolicy::normalize({ex.displacement}, max_step);
    std::tie(r.distance, r.reached) = progress_labels(goal_field, pose.position, ep.initial_geodesic, p.cfg.progress);
    r.round = round;
    out.push_back(std::move(r));
    ++st.decisions;
    Vec2 disp;
    if (gate.expert_turn()) {
      ++st.expert_decisions;
      disp = ex.displacement;
      if (disp.norm() < navsim::kNoOpDisplacement) break;
    } else {
      const Decision d = decide(p, s, rng);
      if (progress::should_stop(d.score, decision, p.cfg.progress)) break;
      disp = d.displacement;
    }
    if (decision == p.cfg.progress.max_decisions) break;
    const auto w = navsim::execute_waypoint(grid, pose, navsim::clamp_displacement(disp, max_step), max_step);
    st.collisions += w.collisions;
    pose = w.pose;
  }
  st.final_error = navsim::distance(pose.position, ep.goal);
  return st;
}

/// Rollouts over `episodes` with one optimizer update per episode from its aggregated step losses.
inline RoundResult dagger_round(Policy& p, const instructgen::Dataset& ds,
                                const std::vector<const instructgen::Episode*>& episodes, const DaggerConfig& dc,
                                const TrainConfig& tc, int round, gradcore::OptimizerState<Scalar>& opt,
                                bool update = true) {
  dc.validate();
  RoundResult res;
  MixingGate gate(dc.alpha, derive_seed(derive_seed(tc.seed, "gate"), static_cast<std::uint64_t>(round)));
  for (const auto* ep : episodes) {
    Rng rng(derive_seed(derive_seed(derive_seed(tc.seed, "dagger"), static_cast<std::uint64_t>(round)), ep->id));
    std::vector<StepRecord> recs;
    res.episodes.push_back(dagger_episode(p, *ep, ds.grid_of(*ep), dc, gate, rng, round, recs));
    if (update) {
      const auto [wp, d] = update_step(p, opt, pointers(recs), rng, "dagger round " + std::to_string(round) + " " + ep->id);
      res.loss_wp += wp / static_cast<double>(episodes.size());
      res.loss_dist += d / static_cast<double>(episodes.size());
    }
    res.records.insert(res.records.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return res;
}

/// Buffer file: one record per line, "|"-separated groups, values printed round-trip exact.
inline std::string format_record(const StepRecord& r) {
  std::string s = std::to_string(r.round) + "|";
  for (std::size_t i = 0; i < r.tokens.size(); ++i) s += (i ? " " : "") + std::to_string(r.tokens[i]);
  s += "|";
  for (double v : r.action) s += format_double(v) + " ";
  s += "|" + format_double(r.distance) + " " + format_double(r.reached);
  for (const auto& e : r.history) {
    s += "|" + format_double(e.distance) + " " + format_double(e.sin_theta) + " " + format_double(e.cos_theta) + " " +
         std::to_string(e.step) + " " + format_double(e.obs.max_range);
    for (const auto& v : e.obs.views)
      s += " " + format_double(v.depth) + " " + std::to_string(v.semantic) + " " + format_double(v.sin_heading) + " " +
           format_double(v.cos_heading);
  }
  return s;
}

inline StepRecord parse_record(const std::string& line) {
  const auto groups = split(line, '|');
  if (groups.size() < 5) throw FormatError("buffer record needs at least 5 groups");
  StepRecord r;
  r.round = static_cast<int>(parse_int(groups[0], "record round"));
  for (const auto& w : split_words(groups[1])) r.tokens.push_back(static_cast<int>(parse_int(w, "token")));
  for (const auto& w : split_words(groups[2])) r.action.push_back(parse_double(w, "action"));
  const auto lab = split_words(groups[3]);
  if (lab.size() != 2) throw FormatError("buffer record labels need 2 values");
  r.distance = parse_double(lab[0], "distance label");
  r.reached = parse_double(lab[1], "reached label");
  for (std::size_t gi = 4; gi < groups.size(); ++gi) {
    const auto w = split_words(groups[gi]);
    if (w.size() != 5 + 4 * encoder::kViews) throw FormatError("buffer history entry has wrong field count");
    HistoryEntry e;
    e.distance = parse_double(w[0], "history distance");
    e.sin_theta = parse_double(w[1], "history sin");
    e.cos_theta = parse_double(w[2], "history cos");
    e.step = static_cast<int>(parse_int(w[3], "history step"));
    e.obs.max_range = parse_double(w[4], "max range");
    for (std::size_t v = 0; v < encoder::kViews; ++v) {
      auto& view = e.obs.views[v];
      view.depth = parse_double(w[5 + 4 * v], "depth");
      view.semantic = static_cast<int>(parse_int(w[6 + 4 * v], "semantic"));
      view.sin_heading = parse_double(w[7 + 4 * v], "view sin");
      view.cos_heading = parse_double(w[8 + 4 * v], "view cos");
    }
    r.history.push_back(e);
  }
  return r;
}

inline std::string format_buffer(const std::vector<StepRecord>& recs) {
  std::string s;
  for (const auto& r : recs) s += format_record(r) + "\n";
  return s;
}

inline std::vector<StepRecord> parse_buffer(std::string_view text) {
  std::vector<StepRecord> out;
  for (const auto& line : split_lines(text))
    if (!trim(line).empty()) out.push_back(parse_record(line));
  return out;
}

inline std::string buffer_digest(const std::vector<StepRecord>& recs) {
  Digest d;
  d.update(format_buffer(recs));
  return d.hex();
}

struct StageReport {
  std::string stage;
  double loss_wp = 0.0;
  double loss_dist = 0.0;
  std::size_t buffer = 0;
  double expert_fraction = 0.0;
  double wall_seconds = 0.0;
};

struct PipelineResult {
  Policy policy;
  std::vector<StageReport> stages;
  std::vector<EpochLog> epochs;
  std::vector<StepRecord> buffer;
};

inline std::string format_report(const std::vector<StageReport>& stages, bool timing) {
  std::string s;
  for (const auto& st : stages) {
    s += "stage=" + st.stage + " loss_wp=" + format_double(st.loss_wp) + " loss_dist=" + format_double(st.loss_dist) +
         " buffer=" + std::to_string(st.buffer) + " expert_fraction=" + format_double(st.expert_fraction);
    if (timing) s += " wall_s=" + format_fixed(st.wall_seconds, 3);
    s += "\n";
  }
  return s;
}

struct PipelineHooks {
  LogSink log;
  std::function<void(const Policy&, const std::string& stage)> checkpoint;
};

/// `rounds` DAgger rounds from an already trained policy; appends to `res.buffer` and `res.stages`.
inline void dagger_rounds(PipelineResult& res, const instructgen::Dataset& ds, const DaggerConfig& dc,
                          const TrainConfig& tc, const PipelineHooks& hooks = {}) {
  dc.validate();
  const auto episodes = ds.split(instructgen::Split::kTrain);
  if (episodes.empty()) throw ContractError("DAgger needs training episodes");
  auto opt = make_optimizer(tc);
  using clock = std::chrono::steady_clock;
  for (int round = 1; round <= dc.rounds; ++round) {
    const auto t0 = clock::now();
    auto rr = dagger_round(res.policy, ds, episodes, dc, tc, round, opt);
    res.buffer.insert(res.buffer.end(), std::make_move_iterator(rr.records.begin()),
                      std::make_move_iterator(rr.records.end()));
    const std::string name = "dagger" + std::to_string(round);
    res.stages.push_back({name, rr.loss_wp, rr.loss_dist, res.buffer.size(), rr.expert_fraction(),
                          std::chrono::duration<double>(clock::now() - t0).count()});
    if (hooks.checkpoint) hooks.checkpoint(res.policy, name);
  }
}

/// Fine-tunes on the training demos (when enabled) plus the aggregated buffer, same hyperparameters.
inline void finetune(PipelineResult& res, const instructgen::Dataset& ds, const DaggerConfig& dc,
                     const TrainConfig& tc, const PipelineHooks& hooks = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<StepRecord> demos;
  if (dc.finetune_with_demos) demos = dataset_records(ds, instructgen::Split::kTrain, res.policy.cfg);
  auto union_ptrs = pointers(demos);
  for (const auto& r : res.buffer) union_ptrs.push_back(&r);
  const auto ft = train_records(res.policy, union_ptrs, tc, "finetune", hooks.log);
  res.epochs.insert(res.epochs.end(), ft.begin(), ft.end());
  res.stages.push_back({"finetune", ft.back().loss_wp, ft.back().loss_dist, res.buffer.size(), 0.0,
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  if (hooks.checkpoint) hooks.checkpoint(res.policy, "finetune");
}

/// DAgger rounds followed by fine-tuning, starting from a trained policy.
inline PipelineResult continue_pipeline(Policy start, const instructgen::Dataset& ds, const DaggerConfig& dc,
                                        const TrainConfig& tc, const PipelineHooks& hooks = {},
                                        std::vector<StageReport> stages = {}) {
  PipelineResult res{std::move(start), std::move(stages), {}, {}};
  dagger_rounds(res, ds, dc, tc, hooks);
  finetune(res, ds, dc, tc, hooks);
  return res;
}

/// BC pretraining, `rounds` DAgger rounds, then fine-tuning on demos plus the aggregated buffer.
inline PipelineResult run_pipeline(const PolicyConfig& pc, const instructgen::Dataset& ds, const DaggerConfig& dc,
                                   const TrainConfig& tc, const PipelineHooks& hooks = {}) {
  dc.validate();
  tc.validate();
  Policy p = make_policy(pc, tc.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto bc = train_bc(p, ds, tc, hooks.log);
  std::vector<StageReport> stages{{"bc", bc.back().loss_wp, bc.back().loss_dist, 0, 0.0,
                                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  if (hooks.checkpoint) hooks.checkpoint(p, "bc");
  auto res = continue_pipeline(std::move(p), ds, dc, tc, hooks, std::move(stages));
  res.epochs.insert(res.epochs.begin(), bc.begin(), bc.end());
  return res;
}

}  // namespace difnav::trainer
