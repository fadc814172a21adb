#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "difnav/core/hash.hpp"
#include "difnav/core/rng.hpp"
#include "difnav/core/text.hpp"
#include "difnav/instructgen/demo.hpp"
#include "difnav/instructgen/describe.hpp"
#include "difnav/navsim/scene_gen.hpp"
#include "difnav/navsim/scene_io.hpp"

namespace difnav::instructgen {

using navsim::Category;

enum class Split { kTrain, kValSeen, kValUnseen };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValSeen:
      return "val_seen";
    case Split::kValUnseen:
      return "val_unseen";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val_seen") return Split::kValSeen;
  if (s == "val_unseen") return Split::kValUnseen;
  throw FormatError("unknown split: " + std::string(s));
}

struct DatasetConfig {
  std::vector<Category> categories{Category::kOpenArea, Category::kNarrowSpace, Category::kMaze};
  int scenes_per_category = 2;
  int episodes_per_scene = 10;
  int interval = 2;  // sparse waypoint interval n
  std::uint64_t seed = 0;
  Ambiguity ambiguity = Ambiguity::kRouteLevel;
  navsim::SceneConfig scene;
  double min_geodesic = 2.0;
  double max_geodesic = 5.0;
  int max_retries = 400;
  int val_seen_every = 5;  // every k-th episode of a training scene is held out as val_seen
  bool hold_out_unseen = true;
};

struct SceneEntry {
  std::string name;
  Category category = Category::kOpenArea;
  GridWorld grid;
  bool unseen = false;
};

struct Episode {
  std::string id;
  std::size_t scene = 0;  // index into Dataset::scenes
  Split split = Split::kTrain;
  Pose start;
  Vec2 goal;
  Instruction instruction;
  DemoTrajectory demo;  // sparsified
  double initial_geodesic = 0.0;
};

struct Dataset {
  std::vector<SceneEntry> scenes;
  std::vector<Episode> episodes;
  int interval = 2;

  std::vector<const Episode*> split(Split s) const {
    std::vector<const Episode*> out;
    for (const auto& e : episodes)
      if (e.split == s) out.push_back(&e);
    return out;
  }
  const GridWorld& grid_of(const Episode& e) const { return scenes.at(e.scene).grid; }
  Category category_of(const Episode& e) const { return scenes.at(e.scene).category; }

  /// Digest over scenes, episodes, instructions and sparse demos.
  std::string digest() const {
    Digest d;
    for (const auto& s : scenes) {
      d.update(s.name);
      d.update(navsim::format_scene(s.grid));
    }
    for (const auto& e : episodes) {
      d.update(e.id);
      d.update(split_name(e.split));
      for (int t : e.instruction.tokens) d.update(std::to_string(t) + " ");
      for (const auto& p : e.demo.sparse)
        d.update(format_double(p.position.x) + "," + format_double(p.position.y) + "," +
                 std::to_string(p.heading_index) + ";");
      d.update(format_double(e.initial_geodesic));
    }
    return d.hex();
  }
};

namespace detail {

inline PlannerConfig planner_for(int interval) {
  PlannerConfig pc;
  pc.commit_steps = interval;
  return pc;
}

}  // namespace detail

/// Samples one episode in `grid`: goal at a landmark center, start at a free cell center whose
/// geodesic distance to the goal lies within the configured band.
inline Episode sample_episode(const GridWorld& grid, const DatasetConfig& cfg, Rng& rng) {
  const auto ids = grid.landmark_ids();
  if (ids.empty()) throw EpisodeGenerationError("scene has no landmarks to use as goals");
  std::vector<navsim::Cell> free;
  for (std::size_t i = 0; i < grid.occupied.size(); ++i)
    if (!grid.occupied[i]) free.push_back(grid.cell_at(i));
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const int lm = ids[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(ids.size()) - 1))];
    const Vec2 goal = *grid.landmark_center(lm);
    const Vec2 start = grid.center_of(free[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(free.size()) - 1))]);
    const int heading = uniform_int(rng, 0, navsim::kHeadingSteps - 1);
    const auto geo = navsim::geodesic_distance(grid, start, goal);
    if (!geo || *geo < cfg.min_geodesic || *geo > cfg.max_geodesic) continue;
    try {
      Episode e;
      e.start = Pose(start, heading);
      e.goal = goal;
      e.demo = sparsify(plan_demo(grid, e.start, goal, {}, detail::planner_for(cfg.interval)), cfg.interval);
      e.instruction = describe(e.demo, grid, cfg.ambiguity);
      e.initial_geodesic = *geo;
      return e;
    } catch (const EpisodeGenerationError&) {
      continue;
    }
  }
  throw EpisodeGenerationError("no valid episode after " + std::to_string(cfg.max_retries) + " attempts");
}

/// Deterministic scene set. The last scene of each category is held out as val_unseen when a
/// category has at least two scenes.
inline Dataset build_scenes(const DatasetConfig& cfg) {
  if (cfg.categories.empty() || cfg.scenes_per_category < 1 || cfg.episodes_per_scene < 1)
    throw ParameterError("dataset counts must be >= 1");
  if (cfg.interval < 1) throw ParameterError("waypoint interval must be >= 1");
  Dataset ds;
  ds.interval = cfg.interval;
  for (Category c : cfg.categories)
    for (int s = 0; s < cfg.scenes_per_category; ++s) {
      SceneEntry entry;
      entry.name = std::string(navsim::category_name(c)) + "_" + std::to_string(s);
      entry.category = c;
      entry.grid = navsim::generate_scene(c, derive_seed(cfg.seed, static_cast<std::uint64_t>(c), s), cfg.scene);
      entry.unseen = cfg.hold_out_unseen && cfg.scenes_per_category >= 2 && s == cfg.scenes_per_category - 1;
      ds.scenes.push_back(std::move(entry));
    }
  return ds;
}

/// Samples episodes for every scene of `ds`, replacing any existing ones.
inline void populate_episodes(Dataset& ds, const DatasetConfig& cfg) {
  ds.episodes.clear();
  ds.interval = cfg.interval;
  for (std::size_t si = 0; si < ds.scenes.size(); ++si) {
    const SceneEntry& scene = ds.scenes[si];
    std::map<Split, int> counters;
    const std::size_t first = ds.episodes.size();
    for (int k = 0; k < cfg.episodes_per_scene; ++k) {
      Rng rng(derive_seed(derive_seed(cfg.seed, "episode"), si, static_cast<std::uint64_t>(k)));
      Episode e = sample_episode(scene.grid, cfg, rng);
      e.scene = si;
      if (scene.unseen) {
        e.split = Split::kValUnseen;
      } else if (cfg.val_seen_every > 0 && k % cfg.val_seen_every == cfg.val_seen_every - 1) {
        e.split = Split::kValSeen;
      } else {
        e.split = Split::kTrain;
      }
      e.id = scene.name + "." + std::string(split_name(e.split)) + "." + std::to_string(counters[e.split]++);
      ds.episodes.push_back(std::move(e));
    }
    // Group by split within the scene, the order in which episode files list them.
    std::stable_sort(ds.episodes.begin() + static_cast<std::ptrdiff_t>(first), ds.episodes.end(),
                     [](const Episode& a, const Episode& b) { return a.split < b.split; });
  }
}

inline Dataset build_dataset(const DatasetConfig& cfg) {
  Dataset ds = build_scenes(cfg);
  populate_episodes(ds, cfg);
  return ds;
}

/// Scene index written by scene generation: one "name,category,unseen" line per scene.
inline std::string format_scene_index(const Dataset& ds) {
  std::string s;
  for (const auto& e : ds.scenes)
    s += e.name + "," + std::string(navsim::category_name(e.category)) + "," + (e.unseen ? "1" : "0") + "\n";
  return s;
}

inline void write_scenes(const Dataset& ds, const std::filesystem::path& dir) {
  for (const auto& e : ds.scenes) navsim::save_scene(dir / "scenes" / (e.name + ".txt"), e.grid);
  write_text_file(dir / "scenes.txt", format_scene_index(ds));
}

inline Dataset load_scenes(const std::filesystem::path& dir) {
  Dataset ds;
  for (const auto& line : split_lines(read_text_file(dir / "scenes.txt"))) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw FormatError("scene index line needs 3 fields: '" + line + "'");
    SceneEntry e;
    e.name = std::string(trim(f[0]));
    e.category = navsim::parse_category(trim(f[1]));
    e.unseen = trim(f[2]) == "1";
    e.grid = navsim::load_scene(dir / "scenes" / (e.name + ".txt"), e.category);
    ds.scenes.push_back(std::move(e));
  }
  return ds;
}

/// One manifest line: which scene and episode file make up a split.
struct ManifestEntry {
  Split split = Split::kTrain;
  Category category = Category::kOpenArea;
  std::string scene_path;
  std::string episode_path;
  bool operator==(const ManifestEntry&) const = default;
};

inline std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string s;
  for (const auto& m : entries)
    s += std::string(split_name(m.split)) + "," + std::string(navsim::category_name(m.category)) + "," + m.scene_path +
         "," + m.episode_path + "\n";
  return s;
}

inline std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> out;
  for (const auto& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw FormatError("manifest line needs 4 fields: '" + line + "'");
    out.push_back({parse_split(trim(f[0])), navsim::parse_category(trim(f[1])), std::string(trim(f[2])),
                   std::string(trim(f[3]))});
  }
  return out;
}

/// Writes scene files (scenes/), episode files (episodes/) and manifest.txt under `dir`.
/// Paths inside the manifest are relative to `dir`.
inline std::vector<ManifestEntry> write_dataset(const Dataset& ds, const std::filesystem::path& dir,
                                                bool write_scenes = true, const Vocabulary& vocab = Vocabulary::builtin()) {
  std::vector<ManifestEntry> manifest;
  for (std::size_t si = 0; si < ds.scenes.size(); ++si) {
    const auto& scene = ds.scenes[si];
    const std::string scene_rel = "scenes/" + scene.name + ".txt";
    if (write_scenes) navsim::save_scene(dir / scene_rel, scene.grid);
    for (Split sp : {Split::kTrain, Split::kValSeen, Split::kValUnseen}) {
      std::vector<navsim::EpisodeRecord> recs;
      for (const auto& e : ds.episodes)
        if (e.scene == si && e.split == sp) recs.push_back({scene_rel, e.start, e.goal, vocab.decode(e.instruction.tokens)});
      if (recs.empty()) continue;
      const std::string ep_rel = "episodes/" + scene.name + "." + std::string(split_name(sp)) + ".txt";
      write_text_file(dir / ep_rel, navsim::format_episodes(recs));
      manifest.push_back({sp, scene.category, scene_rel, ep_rel});
    }
  }
  write_text_file(dir / "manifest.txt", format_manifest(manifest));
  return manifest;
}

/// Loads a manifest and re-plans every demo at waypoint interval `interval`.
inline Dataset load_dataset(const std::filesystem::path& manifest_path, int interval,
                            const Vocabulary& vocab = Vocabulary::builtin()) {
  const auto base = manifest_path.parent_path();
  const auto entries = parse_manifest(read_text_file(manifest_path));
  Dataset ds;
  ds.interval = interval;
  std::map<std::string, std::size_t> scene_index;
  for (const auto& m : entries) {
    if (!scene_index.count(m.scene_path)) {
      SceneEntry s;
      s.name = std::filesystem::path(m.scene_path).stem().string();
      s.category = m.category;
      s.grid = navsim::load_scene(base / m.scene_path, m.category);
      s.unseen = m.split == Split::kValUnseen;
      scene_index[m.scene_path] = ds.scenes.size();
      ds.scenes.push_back(std::move(s));
    }
    const std::size_t si = scene_index[m.scene_path];
    const GridWorld& grid = ds.scenes[si].grid;
    const auto recs = navsim::parse_episodes(read_text_file(base / m.episode_path));
    for (std::size_t k = 0; k < recs.size(); ++k) {
      Episode e;
      e.scene = si;
      e.split = m.split;
      e.id = ds.scenes[si].name + "." + std::string(split_name(m.split)) + "." + std::to_string(k);
      e.start = recs[k].start;
      e.goal = recs[k].goal;
      e.instruction = Instruction{vocab.encode(recs[k].tokens)};
      validate_instruction(e.instruction, vocab);
      e.demo = sparsify(plan_demo(grid, e.start, e.goal, {}, detail::planner_for(interval)), interval);
      e.initial_geodesic = *navsim::geodesic_distance(grid, e.start.position, e.goal);
      ds.episodes.push_back(std::move(e));
    }
  }
  return ds;
}

}  // namespace difnav::instructgen
