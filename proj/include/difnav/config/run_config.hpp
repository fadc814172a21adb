#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/core/text.hpp"
#include "difnav/evalkit/evaluate.hpp"
#include "difnav/trainer/pipeline.hpp"

namespace difnav::config {

enum class Profile { kDesk, kPaper };

inline Profile parse_profile(std::string_view s) {
  if (s == "desk") return Profile::kDesk;
  if (s == "paper") return Profile::kPaper;
  throw ConfigError("unknown profile: " + std::string(s) + " (expected desk or paper)");
}

struct KeySpec {
  std::string key;
  std::string desk;
  std::string paper;
  std::string doc;
};

/// Every tunable with its desk and paper defaults.
inline const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs{
      {"run.profile", "desk", "paper", "profile name, recorded in every report"},
      {"run.seed", "0", "0", "global seed; every stream derives from it"},
      {"run.jobs", "1", "1", "episode-parallel evaluation threads (1 is bit-exact and the default)"},
      {"report.timing", "0", "0", "append wall time to report lines (breaks byte-exact reruns)"},
      {"paths.data", "", "", "dataset directory (scenes.txt, manifest.txt); empty means the output directory"},
      {"paths.checkpoint", "", "", "input checkpoint for train-dagger, finetune, eval and sample"},
      {"paths.buffer", "", "", "aggregated buffer for finetune; empty means buffer.txt next to the checkpoint"},
      {"dataset.categories", "open_area,narrow_space,maze", "open_area,narrow_space,maze", "scene categories"},
      {"dataset.scenes_per_category", "1", "2", "scenes generated per category"},
      {"dataset.episodes_per_scene", "24", "30", "episodes sampled per scene"},
      {"dataset.val_seen_every", "3", "5", "every k-th episode of a training scene is held out as val_seen"},
      {"dataset.hold_out_unseen", "0", "1", "hold out the last scene of each category as val_unseen"},
      {"dataset.ambiguity", "route_level", "route_level", "instruction style: route_level or goal_only"},
      {"dataset.min_geodesic", "2.0", "2.0", "minimum start-goal geodesic distance (m)"},
      {"dataset.max_geodesic", "5.0", "5.0", "maximum start-goal geodesic distance (m)"},
      {"scene.width", "24", "24", "scene width in 0.25 m cells"},
      {"scene.height", "24", "24", "scene height in 0.25 m cells"},
      {"policy.d_model", "32", "64", "encoder width"},
      {"policy.heads", "4", "4", "attention heads"},
      {"policy.ffn_hidden", "64", "128", "transformer feed-forward width"},
      {"policy.pano_layers", "2", "2", "panorama encoder layers"},
      {"policy.instr_layers", "2", "2", "instruction encoder layers"},
      {"policy.cross_layers", "2", "2", "cross-modal layers"},
      {"policy.H", "3", "3", "history length (observations, current included)"},
      {"policy.conv_layers", "5", "15", "denoiser conv layers (1 + 2 per residual block)"},
      {"policy.channels", "32", "64", "denoiser conv channels"},
      {"policy.kernel", "3", "3", "denoiser conv kernel width"},
      {"policy.time_dim", "32", "32", "sinusoidal timestep features"},
      {"policy.time_hidden", "64", "128", "timestep projection width"},
      {"policy.regress_hidden", "64", "128", "regression baseline hidden width"},
      {"policy.K", "10", "10", "diffusion steps"},
      {"policy.s", "0.008", "0.008", "cosine schedule offset"},
      {"policy.n", "2", "2", "sparse waypoint interval (FORWARD steps per waypoint)"},
      {"policy.clip_sample", "1", "1", "clip the predicted clean action to [-1, 1] while sampling"},
      {"policy.denoiser_activation", "gelu", "gelu", "denoiser activation: gelu|mish"},
      {"policy.head", "diffusion", "diffusion", "action head: diffusion or regression (baseline)"},
      {"progress.mode", "distance", "distance", "stop strategy: distance, classify or classify_weighted"},
      {"progress.tau", "0.1", "0.1", "stop when the predicted normalized distance falls below tau"},
      {"progress.lambda", "1e-4", "1e-4", "weight of the distance loss"},
      {"progress.hidden", "32", "64", "progress head width"},
      {"progress.max_decisions", "40", "40", "decision cap per episode"},
      {"progress.pos_weight", "10", "10", "positive-class weight for classify_weighted"},
      {"progress.reach_radius", "0.5", "3.0", "reached-label radius for the classification heads (m)"},
      {"train.lr", "1e-3", "1e-4", "AdamW learning rate"},
      {"train.weight_decay", "1e-2", "1e-2", "AdamW decoupled weight decay"},
      {"train.batch", "64", "256", "minibatch size"},
      {"train.epochs", "30", "100", "epochs for BC and fine-tuning"},
      {"dagger.alpha", "0.25", "0.10", "probability of executing the expert action"},
      {"dagger.rounds", "5", "5", "DAgger rounds"},
      {"dagger.radius", "1.0", "1.0", "expert candidate radius r (m)"},
      {"dagger.headings", "16", "16", "expert candidate headings"},
      {"dagger.radii", "0.25,0.5,1.0", "0.25,0.5,1.0", "expert candidate radii (m)"},
      {"dagger.finetune_with_demos", "1", "1", "fine-tune on original demos plus the buffer (0: buffer only)"},
      {"eval.split", "val_seen", "val_seen", "split to evaluate: train, val_seen or val_unseen"},
      {"eval.success_radius", "0.5", "3.0", "success radius (m)"},
      {"eval.perturb", "0.5", "0.0", "start-position perturbation radius (m); 0 keeps dataset starts"},
      {"sample.episode", "", "", "episode id to sample at; empty means the first of eval.split"},
      {"sample.count", "16", "16", "diffusion samples drawn at the episode start"},
      {"gradcheck.tolerance", "1e-4", "1e-4", "relative error bound"},
  };
  return specs;
}

inline const KeySpec* find_spec(std::string_view key) {
  for (const auto& s : key_specs())
    if (s.key == key) return &s;
  return nullptr;
}

/// Flat key=value config with section prefixes. Unknown keys are rejected.
class RunConfig {
 public:
  explicit RunConfig(Profile p = Profile::kDesk) {
    for (const auto& s : key_specs()) values_[s.key] = p == Profile::kDesk ? s.desk : s.paper;
  }

  void set(const std::string& key, const std::string& value) {
    if (!find_spec(key)) throw ConfigError("unknown config key: " + key);
    values_[key] = value;
  }

  /// Applies "key=value" lines; '#' starts a comment.
  void merge_text(std::string_view text, const std::string& origin = "config") {
    int line_no = 0;
    for (const auto& raw : split_lines(text)) {
      ++line_no;
      std::string_view line = raw;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
      const std::string key(trim(line.substr(0, eq)));
      try {
        set(key, std::string(trim(line.substr(eq + 1))));
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }

  double real(const std::string& key) const { return convert<double>(key, [](const std::string& v) { return parse_double(v, "value"); }); }
  long long integer(const std::string& key) const {
    return convert<long long>(key, [](const std::string& v) { return parse_int(v, "value"); });
  }
  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError(key + ": expected 0/1 or true/false, got '" + v + "'");
  }
  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& p : split(str(key), ','))
      if (!trim(p).empty()) out.emplace_back(trim(p));
    return out;
  }

  /// Sorted key=value lines; feeding them back reproduces this config exactly.
  std::string resolved() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
    return s;
  }

 private:
  template <class R, class F>
  R convert(const std::string& key, F f) const {
    try {
      return f(str(key));
    } catch (const FormatError& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }

  std::map<std::string, std::string> values_;
};

/// Typed views of the flat config.
inline instructgen::DatasetConfig dataset_config(const RunConfig& c) {
  instructgen::DatasetConfig d;
  d.categories.clear();
  for (const auto& name : c.list("dataset.categories")) d.categories.push_back(navsim::parse_category(name));
  d.scenes_per_category = static_cast<int>(c.integer("dataset.scenes_per_category"));
  d.episodes_per_scene = static_cast<int>(c.integer("dataset.episodes_per_scene"));
  d.val_seen_every = static_cast<int>(c.integer("dataset.val_seen_every"));
  d.hold_out_unseen = c.flag("dataset.hold_out_unseen");
  d.ambiguity = instructgen::parse_ambiguity(c.str("dataset.ambiguity"));
  d.min_geodesic = c.real("dataset.min_geodesic");
  d.max_geodesic = c.real("dataset.max_geodesic");
  d.scene.width = static_cast<int>(c.integer("scene.width"));
  d.scene.height = static_cast<int>(c.integer("scene.height"));
  d.interval = static_cast<int>(c.integer("policy.n"));
  d.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  return d;
}

inline trainer::PolicyConfig policy_config(const RunConfig& c) {
  trainer::PolicyConfig p;
  auto z = [&](const char* k) { return static_cast<std::size_t>(c.integer(k)); };
  p.encoder.d_model = z("policy.d_model");
  p.encoder.heads = z("policy.heads");
  p.encoder.ffn_hidden = z("policy.ffn_hidden");
  p.encoder.pano_layers = z("policy.pano_layers");
  p.encoder.instr_layers = z("policy.instr_layers");
  p.encoder.cross_layers = z("policy.cross_layers");
  p.encoder.history = z("policy.H");
  p.denoiser.blocks = diffpolicy::blocks_for_layers(z("policy.conv_layers"));
  p.denoiser.channels = z("policy.channels");
  p.denoiser.kernel = z("policy.kernel");
  p.denoiser.time_dim = z("policy.time_dim");
  p.denoiser.time_hidden = z("policy.time_hidden");
  p.denoiser.regress_hidden = z("policy.regress_hidden");
  p.denoiser.clip_sample = c.flag("policy.clip_sample");
  const auto& act = c.str("policy.denoiser_activation");
  if (act != "gelu" && act != "mish") throw ConfigError("policy.denoiser_activation: expected gelu or mish");
  p.denoiser.activation = act == "mish" ? gradcore::Activation::kMish : gradcore::Activation::kGelu;
  p.diffusion_steps = static_cast<int>(c.integer("policy.K"));
  p.schedule_offset = c.real("policy.s");
  p.interval = static_cast<int>(c.integer("policy.n"));
  const auto& head = c.str("policy.head");
  if (head != "diffusion" && head != "regression") throw ConfigError("policy.head: expected diffusion or regression");
  p.regression = head == "regression";
  p.progress.mode = progress::parse_stop_mode(c.str("progress.mode"));
  p.progress.tau = c.real("progress.tau");
  p.progress.lambda = c.real("progress.lambda");
  p.progress.hidden = z("progress.hidden");
  p.progress.max_decisions = static_cast<int>(c.integer("progress.max_decisions"));
  p.progress.pos_weight = c.real("progress.pos_weight");
  p.progress.reach_radius = c.real("progress.reach_radius");
  p.progress.validate();
  if (p.encoder.d_model % p.encoder.heads != 0) throw ParameterError("policy.d_model must be divisible by policy.heads");
  return p.sync(), p;
}

inline trainer::TrainConfig train_config(const RunConfig& c) {
  trainer::TrainConfig t;
  t.lr = c.real("train.lr");
  t.weight_decay = c.real("train.weight_decay");
  t.batch = static_cast<std::size_t>(c.integer("train.batch"));
  t.epochs = static_cast<int>(c.integer("train.epochs"));
  t.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  t.validate();
  return t;
}

inline trainer::DaggerConfig dagger_config(const RunConfig& c) {
  trainer::DaggerConfig d;
  d.alpha = c.real("dagger.alpha");
  d.rounds = static_cast<int>(c.integer("dagger.rounds"));
  d.expert_radius = c.real("dagger.radius");
  d.candidates.headings = static_cast<int>(c.integer("dagger.headings"));
  d.candidates.radii.clear();
  for (const auto& r : c.list("dagger.radii")) d.candidates.radii.push_back(parse_double(r, "dagger.radii"));
  d.finetune_with_demos = c.flag("dagger.finetune_with_demos");
  d.validate();
  return d;
}

inline evalkit::EvalConfig eval_config(const RunConfig& c) {
  evalkit::EvalConfig e;
  e.success_radius = c.real("eval.success_radius");
  e.max_decisions = static_cast<int>(c.integer("progress.max_decisions"));
  e.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  e.jobs = static_cast<int>(c.integer("run.jobs"));
  if (e.jobs < 1) throw ParameterError("run.jobs must be >= 1");
  return e;
}

}  // namespace difnav::config
