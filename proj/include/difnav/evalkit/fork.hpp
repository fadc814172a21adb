#pragma once

#include <string>

#include "difnav/instructgen/dataset.hpp"

namespace difnav::evalkit {

/// Two-route fork: a block splits the room into mirror-image routes of equal geodesic length. Grid rows are
/// symmetric about the start-goal row.
inline navsim::GridWorld fork_scene() {
  constexpr int w = 20, h = 15;
  navsim::GridWorld g(w, h, navsim::Category::kOpenArea);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
      const bool block = x >= 6 && x <= 13 && y >= 3 && y <= 11;
      g.set_occupied({x, y}, border || block);
    }
  for (int y = 6; y <= 8; ++y) g.landmark[g.index({w - 2, y})] = 0;  // goal landmark against the far wall
  return g;
}

struct ForkFixture {
  instructgen::Dataset dataset;
  navsim::Pose start;
  navsim::Vec2 goal;
};

/// `right` demos around one side of the block and `left` around the other, all from one start pose facing
/// the block with the same goal_only instruction. The first waypoints are pure sidesteps, so their mean is a
/// stall at the block face. Every episode is in the training split.
inline ForkFixture make_fork(int right, int left, int interval = 2) {
  ForkFixture f;
  f.dataset.interval = interval;
  instructgen::SceneEntry scene;
  scene.name = "fork";
  scene.category = navsim::Category::kOpenArea;
  scene.grid = fork_scene();
  f.dataset.scenes.push_back(scene);
  const auto& g = f.dataset.scenes.front().grid;
  f.start = navsim::Pose(g.center_of({5, 7}), 0);
  f.goal = g.center_of({17, 7});
  instructgen::PlannerConfig pc;
  pc.commit_steps = interval;
  const navsim::Vec2 via_right = g.center_of({10, 1}), via_left = g.center_of({10, 13});
  const double initial = *navsim::geodesic_distance(g, f.start.position, f.goal);
  for (int i = 0; i < right + left; ++i) {
    instructgen::Episode e;
    e.id = "fork." + std::string(i < right ? "right" : "left") + "." + std::to_string(i);
    e.scene = 0;
    e.split = instructgen::Split::kTrain;
    e.start = f.start;
    e.goal = f.goal;
    e.demo = instructgen::sparsify(instructgen::plan_demo(g, e.start, e.goal, {i < right ? via_right : via_left}, pc), interval);
    e.instruction = instructgen::describe(e.demo, g, instructgen::Ambiguity::kGoalOnly);
    e.initial_geodesic = initial;
    f.dataset.episodes.push_back(std::move(e));
  }
  return f;
}

}  // namespace difnav::evalkit
