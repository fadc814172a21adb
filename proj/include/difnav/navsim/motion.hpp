#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/navsim/grid.hpp"

namespace difnav::navsim {

enum class LowLevelAction { kForward, kRotateLeft, kRotateRight, kStop };

inline std::string_view action_name(LowLevelAction a) {
  switch (a) {
    case LowLevelAction::kForward:
      return "FORWARD";
    case LowLevelAction::kRotateLeft:
      return "ROTATE_LEFT";
    case LowLevelAction::kRotateRight:
      return "ROTATE_RIGHT";
    case LowLevelAction::kStop:
      return "STOP";
  }
  return "?";
}

struct StepResult {
  Pose pose;
  bool collided = false;
};

inline StepResult step_low(const GridWorld& grid, const Pose& pose, LowLevelAction action) {
  switch (action) {
    case LowLevelAction::kForward: {
      const Vec2 target = pose.position + heading_direction(pose.heading_index) * kForwardStep;
      if (!grid.is_free(target)) return {pose, true};
      return {Pose(target, pose.heading_index), false};
    }
    case LowLevelAction::kRotateLeft:
      return {Pose(pose.position, pose.heading_index + 1), false};
    case LowLevelAction::kRotateRight:
      return {Pose(pose.position, pose.heading_index - 1), false};
    case LowLevelAction::kStop:
      break;
  }
  return {pose, false};
}

struct LowLevelStep {
  LowLevelAction action = LowLevelAction::kStop;
  Pose pose;  // after the action
  bool collided = false;
};

struct WaypointResult {
  Pose pose;
  std::vector<LowLevelStep> path;
  int collisions = 0;
  double travelled = 0.0;  // meters actually moved
};

inline constexpr double kDefaultMaxStep = 1.25;
inline constexpr double kNoOpDisplacement = 1e-6;

/// Number of FORWARD actions issued for a displacement of `length` meters.
inline int forward_count(double length) {
  return static_cast<int>(std::ceil(length / kForwardStep - 1e-6));
}

/// Turns toward an agent-frame displacement and walks its length in FORWARD steps.
inline WaypointResult execute_waypoint(const GridWorld& grid, const Pose& pose, Vec2 displacement,
                                       double max_step = kDefaultMaxStep) {
  WaypointResult out;
  out.pose = pose;
  const double length = displacement.norm();
  if (!std::isfinite(length)) throw ContractError("execute_waypoint: non-finite displacement");
  if (length < kNoOpDisplacement) return out;
  if (length > max_step + 1e-9)
    throw ContractError("execute_waypoint: displacement " + std::to_string(length) + " m exceeds max step " +
                        std::to_string(max_step) + " m");

  const int turns = rotation_steps_for(std::atan2(displacement.y, displacement.x));
  const LowLevelAction turn = turns > 0 ? LowLevelAction::kRotateLeft : LowLevelAction::kRotateRight;
  for (int i = 0; i < std::abs(turns); ++i) {
    out.pose = step_low(grid, out.pose, turn).pose;
    out.path.push_back({turn, out.pose, false});
  }
  const int forwards = forward_count(length);
  for (int i = 0; i < forwards; ++i) {
    const StepResult r = step_low(grid, out.pose, LowLevelAction::kForward);
    out.path.push_back({LowLevelAction::kForward, r.pose, r.collided});
    if (r.collided) {
      ++out.collisions;
      break;
    }
    out.pose = r.pose;
    out.travelled += kForwardStep;
  }
  return out;
}

/// Clamps a displacement to at most `max_step` meters, keeping its direction.
inline Vec2 clamp_displacement(Vec2 d, double max_step) {
  const double n = d.norm();
  if (n <= max_step || n == 0.0) return d;
  return d * (max_step / n);
}

}  // namespace difnav::navsim
