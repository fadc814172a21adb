#pragma once

#include <limits>
#include <string>
#include <vector>

#include "difnav/instructgen/demo.hpp"
#include "difnav/instructgen/vocab.hpp"

namespace difnav::instructgen {

enum class Ambiguity { kRouteLevel, kGoalOnly };

inline Ambiguity parse_ambiguity(std::string_view s) {
  if (s == "route_level") return Ambiguity::kRouteLevel;
  if (s == "goal_only") return Ambiguity::kGoalOnly;
  throw ParameterError("unknown instruction mode: " + std::string(s));
}

inline std::string_view ambiguity_name(Ambiguity a) { return a == Ambiguity::kGoalOnly ? "goal_only" : "route_level"; }

inline constexpr int kTurnThreshold = 3;  // heading increments (45 degrees)
inline constexpr int kMaxTurnClauses = 7;
inline constexpr double kLandmarkRadius = 2.0;

struct Turn {
  std::size_t index;  // dense pose where the turn begins
  bool left;
};

/// Direction changes of at least 45 degrees, accumulated from the last reported turn.
inline std::vector<Turn> find_turns(const DemoTrajectory& traj) {
  std::vector<Turn> turns;
  if (traj.dense.size() < 3) return turns;
  int ref = traj.dense[1].heading_index;
  for (std::size_t j = 2; j < traj.dense.size(); ++j) {
    int diff = traj.dense[j].heading_index - ref;
    diff = ((diff % navsim::kHeadingSteps) + navsim::kHeadingSteps + navsim::kHeadingSteps / 2) % navsim::kHeadingSteps -
           navsim::kHeadingSteps / 2;
    if (std::abs(diff) >= kTurnThreshold) {
      turns.push_back({j - 1, diff > 0});
      ref = traj.dense[j].heading_index;
    }
  }
  return turns;
}

/// Landmark whose center is nearest to `p`, or -1 when none lies within `radius`.
inline int nearest_landmark(const GridWorld& grid, Vec2 p, double radius = std::numeric_limits<double>::infinity()) {
  int best = -1;
  double best_d = 0.0;
  for (int id : grid.landmark_ids()) {
    const double d = navsim::distance(*grid.landmark_center(id), p);
    if (d <= radius && (best < 0 || d < best_d)) {
      best = id;
      best_d = d;
    }
  }
  return best;
}

/// Token strings for a trajectory.
///
/// route_level: [FORWARD] {LEFT|RIGHT AT <landmark or ordinal> FORWARD} STOP_AT <goal landmark>
/// goal_only:   GO_TO <goal landmark>
/// Scenes without landmarks end in "STOP HERE".
inline std::vector<std::string> describe_words(const DemoTrajectory& traj, const GridWorld& grid, Ambiguity mode) {
  const int goal_lm = nearest_landmark(grid, traj.goal);
  std::vector<std::string> w;
  if (mode == Ambiguity::kGoalOnly) {
    if (goal_lm < 0) return {"STOP", "HERE"};
    return {"GO_TO", landmark_token(goal_lm)};
  }
  const auto turns = find_turns(traj);
  const std::size_t first = turns.empty() ? traj.dense.size() - 1 : turns[0].index;
  if (first >= 2) w.push_back("FORWARD");
  int clause = 0;
  for (const Turn& t : turns) {
    if (clause == kMaxTurnClauses) break;
    w.push_back(t.left ? "LEFT" : "RIGHT");
    w.push_back("AT");
    const int lm = nearest_landmark(grid, traj.dense[t.index].position, kLandmarkRadius);
    w.push_back(lm >= 0 ? landmark_token(lm) : ordinal_token(clause));
    w.push_back("FORWARD");
    ++clause;
  }
  if (goal_lm < 0) {
    w.push_back("STOP");
    w.push_back("HERE");
  } else {
    w.push_back("STOP_AT");
    w.push_back(landmark_token(goal_lm));
  }
  return w;
}

inline Instruction describe(const DemoTrajectory& traj, const GridWorld& grid, Ambiguity mode,
                            const Vocabulary& vocab = Vocabulary::builtin()) {
  Instruction ins{vocab.encode(describe_words(traj, grid, mode))};
  validate_instruction(ins, vocab);
  return ins;
}

}  // namespace difnav::instructgen
