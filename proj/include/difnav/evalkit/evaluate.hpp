#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "difnav/core/hash.hpp"
#include "difnav/core/text.hpp"
#include "difnav/trainer/expert.hpp"
#include "difnav/trainer/model.hpp"

namespace difnav::evalkit {

using navsim::Category;
using navsim::GridWorld;
using navsim::Pose;
using navsim::Vec2;
using trainer::Policy;

struct EvalConfig {
  double success_radius = 3.0;  // meters; 0.5 in the small-scene profile
  int max_decisions = 40;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct EpisodeResult {
  std::string id;
  Category category = Category::kOpenArea;
  std::vector<Pose> trajectory;  // executed low-level poses, start included
  std::vector<Pose> decisions;   // pose at each policy decision
  double ne = 0.0;
  bool success = false;
  bool oracle_success = false;
  int collisions = 0;
  double tl = 0.0;
  double shortest = 0.0;
};

/// What the rollout loop asks of an agent at each decision: a displacement, or nothing to stop.
using Controller = std::function<std::optional<Vec2>(const Pose& pose, int decision, const trainer::Track& track)>;

/// Generic rollout: observe, decide, execute, until the controller stops or the cap is hit.
inline EpisodeResult run_with(const GridWorld& grid, const instructgen::Episode& ep, Category category,
                              const Controller& controller, const EvalConfig& ec, double max_step) {
  EpisodeResult r;
  r.id = ep.id;
  r.category = category;
  const auto shortest = navsim::geodesic_distance(grid, ep.start.position, ep.goal);
  r.shortest = shortest ? *shortest : 0.0;
  Pose pose = ep.start;
  r.trajectory.push_back(pose);
  trainer::Track track;
  for (int decision = 1; decision <= ec.max_decisions; ++decision) {
    track.push(navsim::render_panorama(grid, pose), pose.position, decision - 1);
    r.decisions.push_back(pose);
    const auto disp = controller(pose, decision, track);
    if (!disp) break;
    const auto w = navsim::execute_waypoint(grid, pose, navsim::clamp_displacement(*disp, max_step), max_step);
    for (const auto& s : w.path) {
      if (s.collided) continue;
      r.tl += navsim::distance(r.trajectory.back().position, s.pose.position);
      r.trajectory.push_back(s.pose);
    }
    r.collisions += w.collisions;
    pose = w.pose;
  }
  r.ne = navsim::distance(pose.position, ep.goal);
  r.success = r.ne < ec.success_radius;
  r.oracle_success = std::any_of(r.trajectory.begin(), r.trajectory.end(), [&](const Pose& p) {
    return navsim::distance(p.position, ep.goal) < ec.success_radius;
  });
  return r;
}

inline std::uint64_t episode_seed(std::uint64_t seed, const std::string& id) {
  return derive_seed(derive_seed(seed, "eval"), id);
}

/// Rollout under a trained policy: encode, read the progress head, sample, execute.
inline EpisodeResult run_episode(const Policy& p, const GridWorld& grid, const instructgen::Episode& ep,
                                 Category category, const EvalConfig& ec) {
  Rng rng(episode_seed(ec.seed, ep.id));
  progress::ProgressConfig stop = p.cfg.progress;
  stop.max_decisions = ec.max_decisions;
  const Controller policy = [&](const Pose& pose, int decision, const trainer::Track& track) -> std::optional<Vec2> {
    const auto d = trainer::decide(p, track.state(ep.instruction.tokens, pose, p.cfg.encoder.history), rng);
    if (progress::should_stop(d.score, decision, stop)) return std::nullopt;
    return d.displacement;
  };
  return run_with(grid, ep, category, policy, ec, p.cfg.action_scale());
}

/// Demonstrator stand-in: executes expert_action and stops when it proposes staying.
inline EpisodeResult run_expert(const GridWorld& grid, const instructgen::Episode& ep, Category category,
                                const EvalConfig& ec, double max_step, double radius = 1.0) {
  const navsim::DistanceField field(grid, ep.goal);
  const Controller expert = [&](const Pose& pose, int, const trainer::Track&) -> std::optional<Vec2> {
    const auto a = trainer::expert_action(grid, pose, ep.demo.sparse, ep.goal, field, radius, max_step);
    if (a.displacement.norm() < navsim::kNoOpDisplacement) return std::nullopt;
    return a.displacement;
  };
  return run_with(grid, ep, category, expert, ec, max_step);
}

struct MetricTable {
  std::size_t episodes = 0;
  double tl = 0.0, ne = 0.0, sr = 0.0, osr = 0.0, spl = 0.0, cr = 0.0;
};

inline MetricTable compute_metrics(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw ContractError("metrics need at least one episode");
  MetricTable m;
  m.episodes = results.size();
  for (const auto& r : results) {
    m.tl += r.tl;
    m.ne += r.ne;
    m.cr += r.collisions;
    m.sr += r.success;
    m.osr += r.oracle_success;
    if (r.success) m.spl += r.shortest / std::max(r.tl, r.shortest);
  }
  const double n = static_cast<double>(results.size());
  m.tl /= n;
  m.ne /= n;
  m.cr /= n;
  m.sr /= n;
  m.osr /= n;
  m.spl /= n;
  return m;
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; results land by index, so order is fixed.
template <class R>
std::vector<R> parallel_map(std::size_t n, int jobs, const std::function<R(std::size_t)>& fn) {
  std::vector<R> out(n);
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

struct CategoryTable {
  Category category;
  MetricTable metrics;
};

struct BenchmarkResult {
  std::vector<CategoryTable> categories;  // categories without episodes are omitted
  MetricTable overall;
  std::vector<EpisodeResult> episodes;
};

inline BenchmarkResult summarize(std::vector<EpisodeResult> results, const std::vector<Category>& categories) {
  BenchmarkResult b;
  b.episodes = std::move(results);
  for (Category c : categories) {
    std::vector<EpisodeResult> sub;
    for (const auto& r : b.episodes)
      if (r.category == c) sub.push_back(r);
    if (!sub.empty()) b.categories.push_back({c, compute_metrics(sub)});
  }
  if (!b.episodes.empty()) b.overall = compute_metrics(b.episodes);
  return b;
}

/// Evaluates `episodes`; start poses may be overridden (perturbed starts) by the caller beforehand.
inline BenchmarkResult benchmark_episodes(const Policy& p, const instructgen::Dataset& ds,
                                          const std::vector<instructgen::Episode>& episodes,
                                          const std::vector<Category>& categories, const EvalConfig& ec) {
  std::vector<instructgen::Episode> chosen;
  for (const auto& e : episodes)
    if (std::find(categories.begin(), categories.end(), ds.category_of(e)) != categories.end()) chosen.push_back(e);
  auto results = parallel_map<EpisodeResult>(chosen.size(), ec.jobs, [&](std::size_t i) {
    return run_episode(p, ds.grid_of(chosen[i]), chosen[i], ds.category_of(chosen[i]), ec);
  });
  return summarize(std::move(results), categories);
}

inline BenchmarkResult benchmark(const Policy& p, const instructgen::Dataset& ds, instructgen::Split split,
                                 const std::vector<Category>& categories, const EvalConfig& ec) {
  std::vector<instructgen::Episode> eps;
  for (const auto* e : ds.split(split)) eps.push_back(*e);
  return benchmark_episodes(p, ds, eps, categories, ec);
}

/// Moves each start up to `max_offset` meters onto a reachable free point and draws a fresh heading.
inline std::vector<instructgen::Episode> perturb_starts(const instructgen::Dataset& ds,
                                                        std::vector<instructgen::Episode> eps, double max_offset,
                                                        std::uint64_t seed) {
  for (auto& e : eps) {
    const auto& grid = ds.grid_of(e);
    const navsim::DistanceField field(grid, e.goal);
    Rng rng(derive_seed(derive_seed(seed, "perturb"), e.id));
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double a = 2.0 * std::numbers::pi * uniform01(rng);
      const double rad = max_offset * std::sqrt(uniform01(rng));
      const Vec2 p{e.start.position.x + rad * std::cos(a), e.start.position.y + rad * std::sin(a)};
      if (!grid.is_free(p)) continue;
      const Vec2 snapped = grid.center_of(grid.cell_of(p));
      const auto d = field.distance_from(snapped);
      if (!d || *d <= 0.0) continue;
      e.start.position = snapped;
      e.initial_geodesic = *d;
      break;
    }
    e.start.heading_index = static_cast<int>(uniform_int(rng, 0, navsim::kHeadingSteps - 1));
  }
  return eps;
}

inline std::string format_result_csv(const EpisodeResult& r) {
  return r.id + "," + std::string(navsim::category_name(r.category)) + "," + format_double(r.ne) + "," +
         (r.success ? "1" : "0") + "," + (r.oracle_success ? "1" : "0") + "," + format_double(r.tl) + "," +
         format_double(r.shortest) + "," + std::to_string(r.collisions) + "," + std::to_string(r.decisions.size());
}

inline std::string format_results_csv(const std::vector<EpisodeResult>& rs) {
  std::string s = "episode_id,category,ne,success,oracle,tl,shortest,collisions,decisions\n";
  for (const auto& r : rs) s += format_result_csv(r) + "\n";
  return s;
}

inline std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

inline std::string format_table_row(const std::string& name, const MetricTable& m) {
  std::string s = name;
  s.resize(std::max<std::size_t>(s.size(), 14), ' ');
  s += pad(std::to_string(m.episodes), 5);
  for (double v : {m.tl, m.ne, m.sr, m.osr, m.spl, m.cr}) s += pad(format_fixed(v, 3), 9);
  return s;
}

/// Aligned text table: one line per category plus the overall row.
inline std::string format_table(const BenchmarkResult& b, const std::string& profile) {
  std::string s = "# profile=" + profile + "\n";
  s += "category         n       TL       NE       SR      OSR      SPL       CR\n";
  for (const auto& c : b.categories) s += format_table_row(std::string(navsim::category_name(c.category)), c.metrics) + "\n";
  if (!b.episodes.empty()) s += format_table_row("overall", b.overall) + "\n";
  return s;
}

/// Machine-readable table records: category,n,tl,ne,sr,osr,spl,cr.
inline std::string format_table_csv(const BenchmarkResult& b) {
  auto row = [](const std::string& name, const MetricTable& m) {
    std::string s = name + "," + std::to_string(m.episodes);
    for (double v : {m.tl, m.ne, m.sr, m.osr, m.spl, m.cr}) s += "," + format_double(v);
    return s + "\n";
  };
  std::string s = "category,n,tl,ne,sr,osr,spl,cr\n";
  for (const auto& c : b.categories) s += row(std::string(navsim::category_name(c.category)), c.metrics);
  if (!b.episodes.empty()) s += row("overall", b.overall);
  return s;
}

struct ModeCluster {
  int sign = 0;  // +1 left of heading, -1 right
  double weight = 0.0;
  double mean_x = 0.0, mean_y = 0.0;  // normalized units
};

struct MultimodalityReport {
  std::size_t samples = 0;
  std::vector<ModeCluster> clusters;  // at most two, positive side first
  double grand_mean_x = 0.0, grand_mean_y = 0.0;
  double min_sample_to_mean = 0.0;    // closest sample to the grand mean
  double baseline_x = 0.0, baseline_y = 0.0;
  double baseline_to_mean = 0.0;
  bool has_baseline = false;
};

/// Splits normalized samples by the sign of their lateral (agent-frame y) component.
inline MultimodalityReport cluster_samples(const std::vector<Vec2>& normalized) {
  MultimodalityReport r;
  r.samples = normalized.size();
  if (normalized.empty()) return r;
  for (const auto& v : normalized) {
    r.grand_mean_x += v.x / static_cast<double>(normalized.size());
    r.grand_mean_y += v.y / static_cast<double>(normalized.size());
  }
  r.min_sample_to_mean = std::numeric_limits<double>::infinity();
  for (int sign : {1, -1}) {
    ModeCluster c{sign, 0.0, 0.0, 0.0};
    std::size_t n = 0;
    for (const auto& v : normalized) {
      if ((v.y >= 0.0 ? 1 : -1) != sign) continue;
      ++n;
      c.mean_x += v.x;
      c.mean_y += v.y;
    }
    if (n == 0) continue;
    c.mean_x /= static_cast<double>(n);
    c.mean_y /= static_cast<double>(n);
    c.weight = static_cast<double>(n) / static_cast<double>(normalized.size());
    r.clusters.push_back(c);
  }
  for (const auto& v : normalized)
    r.min_sample_to_mean = std::min(r.min_sample_to_mean, std::hypot(v.x - r.grand_mean_x, v.y - r.grand_mean_y));
  return r;
}

/// Draws `n` diffusion samples at `state` and compares them with an optional regression baseline.
inline MultimodalityReport multimodality_report(const Policy& p, const encoder::StateInput& state, std::size_t n,
                                                std::uint64_t seed, const Policy* baseline = nullptr) {
  Rng rng(derive_seed(seed, "multimodality"));
  std::vector<const encoder::StateInput*> states(n, &state);
  const auto ds = trainer::decide(p, states, rng);
  std::vector<Vec2> norm;
  const double scale = p.cfg.action_scale();
  for (const auto& d : ds) norm.push_back({d.displacement.x / scale, d.displacement.y / scale});
  auto r = cluster_samples(norm);
  if (baseline) {
    const auto b = trainer::decide(*baseline, state, rng).displacement;
    const double bs = baseline->cfg.action_scale();
    r.has_baseline = true;
    r.baseline_x = b.x / bs;
    r.baseline_y = b.y / bs;
    r.baseline_to_mean = std::hypot(r.baseline_x - r.grand_mean_x, r.baseline_y - r.grand_mean_y);
  }
  return r;
}

inline std::string format_multimodality(const MultimodalityReport& r) {
  std::string s = "samples=" + std::to_string(r.samples) + " clusters=" + std::to_string(r.clusters.size()) +
                  " grand_mean=" + format_double(r.grand_mean_x) + "," + format_double(r.grand_mean_y) +
                  " min_sample_to_mean=" + format_double(r.min_sample_to_mean) + "\n";
  for (const auto& c : r.clusters)
    s += "cluster sign=" + std::to_string(c.sign) + " weight=" + format_double(c.weight) +
         " mean=" + format_double(c.mean_x) + "," + format_double(c.mean_y) + "\n";
  if (r.has_baseline)
    s += "baseline=" + format_double(r.baseline_x) + "," + format_double(r.baseline_y) +
         " baseline_to_mean=" + format_double(r.baseline_to_mean) + "\n";
  if (r.clusters.size() < 2) s += "note=fewer than two clusters\n";
  return s;
}

}  // namespace difnav::evalkit
