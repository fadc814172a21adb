#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "difnav/navsim/grid.hpp"

namespace difnav::navsim {

inline constexpr int kViews = 12;
inline constexpr int kViewStride = kHeadingSteps / kViews;  // heading increments between views
inline constexpr double kDefaultMaxRange = 5.0;

/// Semantic class of a ray hit: 0 nothing within range, 1 wall, 2 + id for landmark id.
inline constexpr int kSemanticOpen = 0;
inline constexpr int kSemanticWall = 1;
inline constexpr int kSemanticClasses = 2 + kMaxLandmarks;

inline int landmark_semantic(int id) { return 2 + id; }

struct ViewReading {
  double depth = 0.0;
  int semantic = kSemanticOpen;
  double sin_heading = 0.0;  // heading of the view relative to the agent
  double cos_heading = 1.0;
  bool operator==(const ViewReading&) const = default;
};

struct PanoObservation {
  std::array<ViewReading, kViews> views{};
  double max_range = kDefaultMaxRange;
  bool operator==(const PanoObservation&) const = default;
};

struct RayHit {
  double depth = 0.0;
  int semantic = kSemanticOpen;
};

/// Class reported for an occupied cell: the smallest landmark id among its 8 neighbours, else wall.
inline int hit_semantic(const GridWorld& grid, Cell c) {
  int best = -1;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int id = grid.landmark_at({c.x + dx, c.y + dy});
      if (id >= 0 && (best < 0 || id < best)) best = id;
    }
  return best >= 0 ? landmark_semantic(best) : kSemanticWall;
}

/// Grid traversal (DDA) from `origin` along unit `dir` to the first occupied cell boundary.
/// A ray passing exactly through a cell corner is stopped if either side cell is occupied.
inline RayHit cast_ray(const GridWorld& grid, Vec2 origin, Vec2 dir, double max_range) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double cs = grid.cell_size;
  Cell c = grid.cell_of(origin);
  if (grid.is_occupied(c)) return {std::numeric_limits<double>::min(), hit_semantic(grid, c)};
  const int sx = dir.x > 0 ? 1 : (dir.x < 0 ? -1 : 0);
  const int sy = dir.y > 0 ? 1 : (dir.y < 0 ? -1 : 0);
  double tx = sx > 0 ? ((c.x + 1) * cs - origin.x) / dir.x : (sx < 0 ? (c.x * cs - origin.x) / dir.x : kInf);
  double ty = sy > 0 ? ((c.y + 1) * cs - origin.y) / dir.y : (sy < 0 ? (c.y * cs - origin.y) / dir.y : kInf);
  const double dtx = sx != 0 ? cs / std::abs(dir.x) : kInf;
  const double dty = sy != 0 ? cs / std::abs(dir.y) : kInf;
  while (true) {
    const double t = std::min(tx, ty);
    if (t > max_range) return {max_range, kSemanticOpen};
    if (tx == ty) {
      const Cell a{c.x + sx, c.y};
      const Cell b{c.x, c.y + sy};
      if (grid.is_occupied(a)) return {t, hit_semantic(grid, a)};
      if (grid.is_occupied(b)) return {t, hit_semantic(grid, b)};
      c = {c.x + sx, c.y + sy};
      tx += dtx;
      ty += dty;
    } else if (tx < ty) {
      c.x += sx;
      tx += dtx;
    } else {
      c.y += sy;
      ty += dty;
    }
    if (grid.is_occupied(c)) return {t, hit_semantic(grid, c)};
  }
}

/// Ray readings at 30 degree offsets from the agent heading, counter-clockwise from straight ahead.
inline PanoObservation render_panorama(const GridWorld& grid, const Pose& pose, double max_range = kDefaultMaxRange) {
  PanoObservation obs;
  obs.max_range = max_range;
  for (int k = 0; k < kViews; ++k) {
    const RayHit hit = cast_ray(grid, pose.position, heading_direction(pose.heading_index + k * kViewStride), max_range);
    const Vec2 rel = heading_direction(k * kViewStride);
    obs.views[k] = {std::max(hit.depth, 1e-6), hit.semantic, rel.y, rel.x};
  }
  return obs;
}

}  // namespace difnav::navsim
