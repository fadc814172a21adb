#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/navsim/geodesic.hpp"
#include "difnav/navsim/motion.hpp"
#include "difnav/navsim/panorama.hpp"

namespace difnav::instructgen {

using navsim::GridWorld;
using navsim::Pose;
using navsim::Vec2;

struct DemoTrajectory {
  std::vector<Pose> dense;   // consecutive poses one FORWARD apart
  std::vector<Pose> sparse;  // every interval-th dense pose plus the last
  int interval = 1;
  Vec2 goal;
  bool operator==(const DemoTrajectory&) const = default;
};

struct PlannerConfig {
  double lookahead = 0.5;        // carrot distance along the geodesic path
  double goal_tolerance = 0.125;
  double near_goal = 0.25;       // may stop here when no step improves
  double via_tolerance = 0.25;
  int max_steps = 600;
  int commit_steps = 1;   // FORWARDs per heading decision; the sparse interval n
  int max_deviation = 3;  // heading increments tried before settling near the goal
};

namespace detail {

/// Point at arc length `s` along a polyline (clamped to its end).
inline Vec2 point_along(const std::vector<Vec2>& poly, double s) {
  for (std::size_t i = 1; i < poly.size(); ++i) {
    const double seg = navsim::distance(poly[i - 1], poly[i]);
    if (s <= seg && seg > 0) return poly[i - 1] + (poly[i] - poly[i - 1]) * (s / seg);
    s -= seg;
  }
  return poly.back();
}

/// A FORWARD target is admissible when free and, on a diagonal cell change, not squeezing past a corner.
inline bool admissible_step(const GridWorld& g, Vec2 from, Vec2 to) {
  if (!g.is_free(to)) return false;
  const navsim::Cell a = g.cell_of(from), b = g.cell_of(to);
  if (a.x != b.x && a.y != b.y) return g.is_free(navsim::Cell{a.x, b.y}) && g.is_free(navsim::Cell{b.x, a.y});
  return true;
}

/// Carrot pursuit toward `target` in runs of `commit` FORWARDs at one heading. Each run must
/// be admissible step by step and end strictly closer (geodesically) to the target, so a sparse
/// chord over a run is executable as a single turn followed by straight FORWARDs.
inline void walk(const GridWorld& g, std::vector<Pose>& poses, Vec2 target, double tolerance,
                 const PlannerConfig& cfg) {
  const navsim::DistanceField field(g, target);
  const int commit = std::max(1, cfg.commit_steps);
  const double lookahead = std::max(cfg.lookahead, commit * navsim::kForwardStep);
  Pose cur = poses.back();
  if (!field.distance_from(cur.position)) throw EpisodeGenerationError("demo target unreachable");
  int steps = 0;
  while (true) {
    const double here = navsim::distance(cur.position, target);
    if (here < tolerance) return;
    if (steps >= cfg.max_steps) throw EpisodeGenerationError("demo planner exceeded step budget");
    std::vector<Vec2> path = *field.path_from(cur.position);
    if (path.size() > 3) path.erase(path.begin() + 1);  // skip the center of the current cell
    const Vec2 carrot = point_along(path, lookahead);
    const Vec2 dir = carrot - cur.position;
    const int want = static_cast<int>(std::lround(std::atan2(dir.y, dir.x) / navsim::kHeadingIncrement));
    const double geo = *field.distance_from(cur.position);

    // Positions of an admissible run at heading h from `from`; empty when blocked.
    auto run = [&](Vec2 from, int h) {
      std::vector<Vec2> pts;
      Vec2 p = from;
      for (int i = 0; i < commit; ++i) {
        const Vec2 next = p + navsim::heading_direction(h) * navsim::kForwardStep;
        if (!g.contains(next) || !admissible_step(g, p, next)) return std::vector<Vec2>{};
        pts.push_back(next);
        p = next;
        if (navsim::distance(p, target) < tolerance) break;
      }
      return pts;
    };
    auto improves = [&](const std::vector<Vec2>& pts) {
      if (pts.empty()) return false;
      const auto d = field.distance_from(pts.back());
      return d && *d < geo - 1e-9;
    };
    // Headings ordered by deviation from the carrot direction, left first.
    std::vector<int> order{want};
    for (int off = 1; off < navsim::kHeadingSteps / 2; ++off) {
      order.push_back(want + off);
      order.push_back(want - off);
    }
    order.push_back(want + navsim::kHeadingSteps / 2);

    std::vector<std::pair<int, std::vector<Vec2>>> chosen;
    for (std::size_t i = 0; i < order.size() && chosen.empty(); ++i) {
      auto pts = run(cur.position, order[i]);
      if (improves(pts)) chosen.push_back({order[i], std::move(pts)});
      if (static_cast<int>(i) == 2 * cfg.max_deviation && chosen.empty() && here < cfg.near_goal) return;
    }
    // Two runs whose combination makes progress, for commitments that overshoot a turn.
    for (std::size_t i = 0; i < order.size() && chosen.empty() && commit > 1; ++i) {
      auto first = run(cur.position, order[i]);
      if (first.empty() || navsim::distance(first.back(), target) < tolerance) continue;
      for (std::size_t j = 0; j < order.size(); ++j) {
        auto second = run(first.back(), order[j]);
        if (improves(second)) {
          chosen.push_back({order[i], first});
          chosen.push_back({order[j], std::move(second)});
          break;
        }
      }
    }
    if (chosen.empty()) {
      if (here < cfg.near_goal) return;
      throw EpisodeGenerationError("demo planner stuck");
    }
    for (const auto& [heading, pts] : chosen)
      for (const Vec2& p : pts) {
        cur = Pose(p, heading);
        poses.push_back(cur);
        ++steps;
      }
  }
}

}  // namespace detail

/// Dense expert trajectory from `start` through optional via points to `goal`.
inline DemoTrajectory plan_demo(const GridWorld& grid, const Pose& start, Vec2 goal, const std::vector<Vec2>& via = {},
                                const PlannerConfig& cfg = {}) {
  if (!grid.contains(start.position) || !grid.is_free(start.position))
    throw EpisodeGenerationError("demo start is not free");
  if (!grid.contains(goal) || !grid.is_free(goal)) throw EpisodeGenerationError("demo goal is not free");
  if (!navsim::geodesic_distance(grid, start.position, goal)) throw EpisodeGenerationError("goal unreachable from start");
  DemoTrajectory t;
  t.goal = goal;
  t.dense.push_back(start);
  for (const Vec2& v : via) detail::walk(grid, t.dense, v, cfg.via_tolerance, cfg);
  detail::walk(grid, t.dense, goal, cfg.goal_tolerance, cfg);
  t.sparse = t.dense;
  return t;
}

/// Keeps every n-th dense pose and the final pose.
inline DemoTrajectory sparsify(const DemoTrajectory& traj, int n) {
  if (n < 1) throw ParameterError("sparsify interval must be >= 1, got " + std::to_string(n));
  DemoTrajectory out = traj;
  out.interval = n;
  out.sparse.clear();
  for (std::size_t i = 0; i < traj.dense.size(); i += static_cast<std::size_t>(n)) out.sparse.push_back(traj.dense[i]);
  if ((traj.dense.size() - 1) % static_cast<std::size_t>(n) != 0) out.sparse.push_back(traj.dense.back());
  return out;
}

/// Ground-truth agent-frame displacement from each sparse pose to the next; zero at the last.
inline std::vector<Vec2> sparse_actions(const DemoTrajectory& traj) {
  std::vector<Vec2> a;
  for (std::size_t i = 0; i < traj.sparse.size(); ++i) {
    if (i + 1 == traj.sparse.size()) {
      a.push_back({0.0, 0.0});
    } else {
      a.push_back(navsim::world_to_agent(traj.sparse[i], traj.sparse[i + 1].position - traj.sparse[i].position));
    }
  }
  return a;
}

inline std::vector<navsim::PanoObservation> sparse_observations(const DemoTrajectory& traj, const GridWorld& grid) {
  std::vector<navsim::PanoObservation> obs;
  obs.reserve(traj.sparse.size());
  for (const auto& p : traj.sparse) obs.push_back(navsim::render_panorama(grid, p));
  return obs;
}

/// Largest displacement the policy may emit at waypoint interval n.
inline double action_scale(int n) { return n * navsim::kForwardStep * 1.5; }

struct ReplayResult {
  Pose final_pose;
  int collisions = 0;
  int low_level_steps = 0;
};

/// Executes the sparse waypoints closed-loop: each displacement is recomputed from the reached pose.
inline ReplayResult replay_sparse(const GridWorld& grid, const DemoTrajectory& traj) {
  ReplayResult r;
  Pose pose = traj.sparse.front();
  const double max_step = action_scale(traj.interval);
  for (std::size_t i = 1; i < traj.sparse.size(); ++i) {
    const Vec2 d = navsim::world_to_agent(pose, traj.sparse[i].position - pose.position);
    const auto w = navsim::execute_waypoint(grid, pose, navsim::clamp_displacement(d, max_step), max_step);
    pose = w.pose;
    r.collisions += w.collisions;
    r.low_level_steps += static_cast<int>(w.path.size());
  }
  r.final_pose = pose;
  return r;
}

}  // namespace difnav::instructgen
