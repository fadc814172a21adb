#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/core/rng.hpp"
#include "difnav/navsim/grid.hpp"

namespace difnav::navsim {

struct SceneConfig {
  int width = 24;
  int height = 24;
  int min_landmarks = 2;
  int max_landmarks = 6;
  int landmark_length = 3;  // cells per landmark strip
  double maze_loop_probability = 0.15;
};

namespace detail {

inline void fill(GridWorld& g, int x0, int y0, int x1, int y1, bool occ) {
  for (int y = std::max(y0, 1); y <= std::min(y1, g.height - 2); ++y)
    for (int x = std::max(x0, 1); x <= std::min(x1, g.width - 2); ++x) g.set_occupied({x, y}, occ);
}

/// Number of free cells 4-connected to `start`.
inline std::size_t component_size(const GridWorld& g, Cell start) {
  std::vector<std::uint8_t> seen(g.occupied.size(), 0);
  std::queue<Cell> q;
  q.push(start);
  seen[g.index(start)] = 1;
  std::size_t n = 0;
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop();
    ++n;
    for (Cell d : {Cell{1, 0}, Cell{-1, 0}, Cell{0, 1}, Cell{0, -1}}) {
      const Cell nb{c.x + d.x, c.y + d.y};
      if (g.is_free(nb) && !seen[g.index(nb)]) {
        seen[g.index(nb)] = 1;
        q.push(nb);
      }
    }
  }
  return n;
}

inline bool connected(const GridWorld& g) {
  for (std::size_t i = 0; i < g.occupied.size(); ++i)
    if (!g.occupied[i]) return component_size(g, g.cell_at(i)) == g.free_count();
  return false;
}

inline GridWorld open_area(const SceneConfig& cfg, Rng& rng) {
  GridWorld g(cfg.width, cfg.height, Category::kOpenArea);
  for (std::size_t i = 0; i < g.occupied.size(); ++i) {
    const Cell c = g.cell_at(i);
    g.occupied[i] = (c.x == 0 || c.y == 0 || c.x == g.width - 1 || c.y == g.height - 1) ? 1 : 0;
  }
  const int obstacles = uniform_int(rng, 0, 3);
  for (int k = 0; k < obstacles; ++k) {
    const int w = uniform_int(rng, 1, 3), h = uniform_int(rng, 1, 3);
    const int x = uniform_int(rng, 3, g.width - 4 - w), y = uniform_int(rng, 3, g.height - 4 - h);
    GridWorld trial = g;
    fill(trial, x, y, x + w - 1, y + h - 1, true);
    if (connected(trial)) g = std::move(trial);
  }
  return g;
}

struct Room {
  int x0, y0, x1, y1;
  Cell center() const { return {(x0 + x1) / 2, (y0 + y1) / 2}; }
};

inline void carve_corridor(GridWorld& g, Cell a, Cell b, int width, bool horizontal_first) {
  const Cell corner = horizontal_first ? Cell{b.x, a.y} : Cell{a.x, b.y};
  auto segment = [&](Cell p, Cell q) {
    fill(g, std::min(p.x, q.x), std::min(p.y, q.y), std::max(p.x, q.x) + (p.y == q.y ? 0 : width - 1),
         std::max(p.y, q.y) + (p.x == q.x ? 0 : width - 1), false);
  };
  segment(a, corner);
  segment(corner, b);
}

inline GridWorld narrow_space(const SceneConfig& cfg, Rng& rng) {
  GridWorld g(cfg.width, cfg.height, Category::kNarrowSpace);
  std::fill(g.occupied.begin(), g.occupied.end(), 1);
  const int hw = (g.width - 2) / 2, hh = (g.height - 2) / 2;
  std::vector<Room> rooms;
  // Quadrant slots visited counter-clockwise so consecutive rooms are neighbours.
  const int slots[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const int count = uniform_int(rng, 3, 4);
  const int skip = count == 4 ? -1 : uniform_int(rng, 0, 3);
  for (int s = 0; s < 4; ++s) {
    if (s == skip) continue;
    const int sw = std::min(hw - 2, uniform_int(rng, 4, 7)), sh = std::min(hh - 2, uniform_int(rng, 4, 7));
    const int bx = 1 + slots[s][0] * hw, by = 1 + slots[s][1] * hh;
    const int x0 = bx + uniform_int(rng, 1, std::max(1, hw - sw - 1));
    const int y0 = by + uniform_int(rng, 1, std::max(1, hh - sh - 1));
    rooms.push_back({x0, y0, x0 + sw - 1, y0 + sh - 1});
  }
  for (const auto& r : rooms) fill(g, r.x0, r.y0, r.x1, r.y1, false);
  for (std::size_t i = 0; i + 1 < rooms.size(); ++i)
    carve_corridor(g, rooms[i].center(), rooms[i + 1].center(), uniform_int(rng, 1, 2), uniform01(rng) < 0.5);
  return g;
}

/// Recursive division over a lattice of 2x2-cell passages separated by 1-cell walls,
/// followed by random wall removal so that loops exist.
inline GridWorld maze(const SceneConfig& cfg, Rng& rng) {
  GridWorld g(cfg.width, cfg.height, Category::kMaze);
  std::fill(g.occupied.begin(), g.occupied.end(), 1);
  const int mx = (g.width - 1) / 3, my = (g.height - 1) / 3;
  if (mx < 2 || my < 2) throw ParameterError("maze scene needs at least 7x7 cells");
  // vwall[j*mx + i]: wall between lattice (i-1, j) and (i, j), i in 1..mx-1.
  // hwall[j*mx + i]: wall between lattice (i, j-1) and (i, j), j in 1..my-1.
  std::vector<std::uint8_t> vwall(static_cast<std::size_t>(mx * my), 0), hwall(static_cast<std::size_t>(mx * my), 0);
  struct Region {
    int x0, y0, x1, y1;  // lattice cells, half-open
  };
  std::vector<Region> stack{{0, 0, mx, my}};
  while (!stack.empty()) {
    const Region r = stack.back();
    stack.pop_back();
    const int w = r.x1 - r.x0, h = r.y1 - r.y0;
    if (w < 2 || h < 2) continue;
    const bool horizontal = h > w || (h == w && uniform01(rng) < 0.5);
    if (horizontal) {
      const int y = uniform_int(rng, r.y0 + 1, r.y1 - 1);
      const int gap = uniform_int(rng, r.x0, r.x1 - 1);
      for (int x = r.x0; x < r.x1; ++x)
        if (x != gap) hwall[static_cast<std::size_t>(y * mx + x)] = 1;
      stack.push_back({r.x0, r.y0, r.x1, y});
      stack.push_back({r.x0, y, r.x1, r.y1});
    } else {
      const int x = uniform_int(rng, r.x0 + 1, r.x1 - 1);
      const int gap = uniform_int(rng, r.y0, r.y1 - 1);
      for (int y = r.y0; y < r.y1; ++y)
        if (y != gap) vwall[static_cast<std::size_t>(y * mx + x)] = 1;
      stack.push_back({r.x0, r.y0, x, r.y1});
      stack.push_back({x, r.y0, r.x1, r.y1});
    }
  }
  // Opening any wall of a spanning-tree maze closes a cycle; open at least one.
  std::vector<std::uint8_t*> walls;
  for (auto& w : vwall)
    if (w) walls.push_back(&w);
  for (auto& w : hwall)
    if (w) walls.push_back(&w);
  bool opened = false;
  for (auto* w : walls)
    if (uniform01(rng) < cfg.maze_loop_probability) {
      *w = 0;
      opened = true;
    }
  if (!opened && !walls.empty()) *walls[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(walls.size()) - 1))] = 0;

  for (int j = 0; j < my; ++j)
    for (int i = 0; i < mx; ++i) {
      fill(g, 3 * i + 1, 3 * j + 1, 3 * i + 2, 3 * j + 2, false);
      if (i > 0 && !vwall[static_cast<std::size_t>(j * mx + i)]) fill(g, 3 * i, 3 * j + 1, 3 * i, 3 * j + 2, false);
      if (j > 0 && !hwall[static_cast<std::size_t>(j * mx + i)]) fill(g, 3 * i + 1, 3 * j, 3 * i + 2, 3 * j, false);
    }
  return g;
}

/// Chebyshev distance from `c` to the nearest landmark cell, capped at `cap`.
inline int landmark_clearance(const GridWorld& g, Cell c, int cap) {
  for (int r = 0; r <= cap; ++r)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if ((std::abs(dx) == r || std::abs(dy) == r) && g.landmark_at({c.x + dx, c.y + dy}) >= 0) return r;
  return cap + 1;
}

/// Tries to place a wall-backed strip of landmark cells inside the given cell rectangle.
inline bool place_landmark(GridWorld& g, int id, int x0, int y0, int x1, int y1, int length, Rng& rng) {
  struct Candidate {
    Cell cell;
    Cell along;  // direction of the strip, parallel to the wall
  };
  std::vector<Candidate> cands;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Cell c{x, y};
      if (!g.inside(c) || g.is_occupied(c) || landmark_clearance(g, c, 3) <= 3) continue;
      if (g.is_occupied({x, y + 1}) || g.is_occupied({x, y - 1})) cands.push_back({c, {1, 0}});
      if (g.is_occupied({x + 1, y}) || g.is_occupied({x - 1, y})) cands.push_back({c, {0, 1}});
    }
  if (cands.empty()) return false;
  const Candidate pick = cands[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(cands.size()) - 1))];
  auto wall_backed = [&](Cell c) {
    if (pick.along.x != 0) return g.is_occupied({c.x, c.y + 1}) || g.is_occupied({c.x, c.y - 1});
    return g.is_occupied({c.x + 1, c.y}) || g.is_occupied({c.x - 1, c.y});
  };
  std::vector<Cell> strip{pick.cell};
  for (int sign : {1, -1})
    for (int k = 1; static_cast<int>(strip.size()) < length; ++k) {
      const Cell c{pick.cell.x + sign * k * pick.along.x, pick.cell.y + sign * k * pick.along.y};
      if (c.x < x0 || c.x > x1 || c.y < y0 || c.y > y1) break;
      if (g.is_occupied(c) || !wall_backed(c) || landmark_clearance(g, c, 3) <= 3) break;
      strip.push_back(c);
    }
  for (const Cell& c : strip) g.landmark[g.index(c)] = static_cast<std::int8_t>(id);
  return true;
}

inline void place_landmarks(GridWorld& g, const SceneConfig& cfg, Rng& rng) {
  const int target = uniform_int(rng, cfg.min_landmarks, std::min(cfg.max_landmarks, kMaxLandmarks));
  // Regions: a 3x3 partition of the interior; each landmark goes to a different one.
  std::vector<int> regions(9);
  for (int i = 0; i < 9; ++i) regions[i] = i;
  std::shuffle(regions.begin(), regions.end(), rng);
  const int iw = g.width - 2, ih = g.height - 2;
  int placed = 0;
  for (int r : regions) {
    if (placed == target) break;
    const int rx = r % 3, ry = r / 3;
    const int x0 = 1 + rx * iw / 3, x1 = rx * iw / 3 + iw / 3 + (rx == 2 ? iw % 3 : 0);
    const int y0 = 1 + ry * ih / 3, y1 = ry * ih / 3 + ih / 3 + (ry == 2 ? ih % 3 : 0);
    if (place_landmark(g, placed, x0, y0, x1, y1, cfg.landmark_length, rng)) ++placed;
  }
  while (placed < cfg.min_landmarks && place_landmark(g, placed, 1, 1, g.width - 2, g.height - 2, cfg.landmark_length, rng))
    ++placed;
}

}  // namespace detail

/// Deterministic scene for a (category, seed) pair.
inline GridWorld generate_scene(Category category, std::uint64_t seed, const SceneConfig& cfg = {}) {
  if (cfg.width < 8 || cfg.height < 8) throw ParameterError("scene must be at least 8x8 cells");
  Rng rng(derive_seed(seed, category_name(category)));
  GridWorld g;
  switch (category) {
    case Category::kOpenArea:
      g = detail::open_area(cfg, rng);
      break;
    case Category::kNarrowSpace:
      g = detail::narrow_space(cfg, rng);
      break;
    case Category::kMaze:
      g = detail::maze(cfg, rng);
      break;
  }
  detail::place_landmarks(g, cfg, rng);
  g.validate();
  return g;
}

}  // namespace difnav::navsim
