#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>
#include <vector>

#include "difnav/navsim/geodesic.hpp"
#include "difnav/navsim/motion.hpp"

namespace difnav::trainer {

struct CandidateSpec {
  int headings = 16;
  std::vector<double> radii{0.25, 0.5, 1.0};
};

struct ExpertAction {
  navsim::Vec2 displacement;  // agent frame; zero means stay / stop
  navsim::Vec2 target;
  bool boxed_in = false;
};

/// Geodesic demonstrator.
///
/// The target is the earliest expert waypoint strictly closer (geodesically) to the goal than the
/// agent, or the goal itself. Candidate displacements (headings x radii no longer than `r` and
/// `max_step`) are executed in simulation; collision-free ones are ranked by geodesic distance from
/// the reached position to the target, then rotation, then radius. Staying put competes as the
/// zero candidate. When staying wins short of the goal, the goal becomes the target.
inline ExpertAction expert_action(const navsim::GridWorld& grid, const navsim::Pose& pose,
                                  const std::vector<navsim::Pose>& expert, navsim::Vec2 goal,
                                  const navsim::DistanceField& goal_field, double r, double max_step,
                                  const CandidateSpec& spec = {}) {
  ExpertAction out;
  out.target = goal;
  const auto here = goal_field.distance_from(pose.position);
  if (here) {
    for (const auto& w : expert) {
      const auto d = goal_field.distance_from(w.position);
      if (d && *d < *here - 1e-9) {
        out.target = w.position;
        break;
      }
    }
  }
  struct Option {
    navsim::Vec2 disp;
    navsim::Vec2 end;
    int rotation;
    double radius;
  };
  std::vector<Option> options;
  for (double radius : spec.radii) {
    if (radius > r + 1e-9 || radius > max_step + 1e-9) continue;
    for (int h = 0; h < spec.headings; ++h) {
      const double a = 2.0 * std::numbers::pi * h / spec.headings;
      const navsim::Vec2 d{radius * std::cos(a), radius * std::sin(a)};
      const auto w = navsim::execute_waypoint(grid, pose, d, max_step);
      if (w.collisions > 0) continue;
      options.push_back({d, w.pose.position, std::abs(navsim::rotation_steps_for(navsim::wrap_angle(a))), radius});
    }
  }
  out.boxed_in = options.empty();

  auto choose = [&](navsim::Vec2 target) {
    const navsim::DistanceField field(grid, target);
    const double inf = std::numeric_limits<double>::infinity();
    auto key = [&](const Option& o) {
      const auto d = field.distance_from(o.end);
      return std::make_tuple(d ? *d : inf, o.rotation, o.radius);
    };
    Option best{{0.0, 0.0}, pose.position, 0, 0.0};
    auto best_key = key(best);
    for (const auto& o : options) {
      const auto k = key(o);
      if (k < best_key) {
        best = o;
        best_key = k;
      }
    }
    return best.disp;
  };
  if (!grid.is_free(out.target)) return out;
  out.displacement = choose(out.target);
  const bool stays = out.displacement.x == 0.0 && out.displacement.y == 0.0;
  if (stays && navsim::distance(out.target, goal) > 0.0) {
    out.target = goal;
    out.displacement = choose(goal);
  }
  return out;
}

}  // namespace difnav::trainer
