#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <set>

#include "difnav/navsim/geodesic.hpp"
#include "difnav/navsim/motion.hpp"
#include "difnav/navsim/panorama.hpp"
#include "difnav/navsim/scene_gen.hpp"
#include "difnav/navsim/scene_io.hpp"
#include "oracles.hpp"

using namespace difnav;
using namespace difnav::navsim;

namespace {

GridWorld open_room(int w, int h) {
  GridWorld g(w, h, Category::kOpenArea);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g.set_occupied({x, y}, x == 0 || y == 0 || x == w - 1 || y == h - 1);
  return g;
}

GridWorld random_grid(int w, int h, double density, std::uint64_t seed) {
  Rng rng(seed);
  GridWorld g = open_room(w, h);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x)
      if (uniform01(rng) < density) g.set_occupied({x, y}, true);
  return g;
}

Vec2 random_free_point(const GridWorld& g, Rng& rng) {
  while (true) {
    const Vec2 p{uniform01(rng) * g.width * g.cell_size, uniform01(rng) * g.height * g.cell_size};
    if (g.contains(p) && g.is_free(p)) return p;
  }
}

}  // namespace

TEST(StepLow, RotateLeftAddsFifteenDegrees) {
  const GridWorld g = open_room(8, 8);
  const Pose p(1.125, 1.125, 0);
  const auto r = step_low(g, p, LowLevelAction::kRotateLeft);
  EXPECT_EQ(r.pose.heading_index, 1);
  EXPECT_DOUBLE_EQ(r.pose.heading(), 15.0 * std::numbers::pi / 180.0);
  EXPECT_FALSE(r.collided);
  EXPECT_EQ(step_low(g, p, LowLevelAction::kRotateRight).pose.heading_index, 23);
}

TEST(StepLow, ForwardIntoWallIsBlocked) {
  const GridWorld g = open_room(8, 8);
  const Pose p(0.375, 0.375, 12);  // facing the west wall
  const auto r = step_low(g, p, LowLevelAction::kForward);
  EXPECT_TRUE(r.collided);
  EXPECT_EQ(r.pose, p);
}

TEST(StepLow, StopIsIdentity) {
  const GridWorld g = open_room(8, 8);
  const Pose p(1.375, 1.625, 5);
  const auto r = step_low(g, p, LowLevelAction::kStop);
  EXPECT_EQ(r.pose, p);
  EXPECT_FALSE(r.collided);
}

TEST(StepLow, ForwardAdvancesExactlyOneStep) {
  const GridWorld g = open_room(8, 8);
  for (int h = 0; h < kHeadingSteps; ++h) {
    const Pose p(1.0, 1.0, h);
    const auto r = step_low(g, p, LowLevelAction::kForward);
    ASSERT_FALSE(r.collided);
    EXPECT_NEAR(distance(r.pose.position, p.position), 0.25, 1e-12);
  }
}

TEST(StepLow, RandomWalksStayInFreeSpace) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GridWorld g = random_grid(16, 16, 0.25, seed);
    Rng rng(seed + 100);
    Pose p(random_free_point(g, rng), uniform_int(rng, 0, 23));
    for (int i = 0; i < 500; ++i) {
      p = step_low(g, p, static_cast<LowLevelAction>(uniform_int(rng, 0, 3))).pose;
      ASSERT_TRUE(g.is_free(p.position));
    }
  }
}

TEST(ExecuteWaypoint, StraightAhead) {
  const GridWorld g = open_room(12, 12);
  const Pose p(1.125, 1.125, 0);
  const auto r = execute_waypoint(g, p, {0.5, 0.0});
  ASSERT_EQ(r.path.size(), 2u);
  EXPECT_EQ(r.path[0].action, LowLevelAction::kForward);
  EXPECT_EQ(r.path[1].action, LowLevelAction::kForward);
  EXPECT_DOUBLE_EQ(r.pose.position.x, 1.625);
  EXPECT_DOUBLE_EQ(r.pose.position.y, 1.125);
  EXPECT_EQ(r.collisions, 0);
}

TEST(ExecuteWaypoint, LeftDisplacementTurnsNinetyDegrees) {
  const GridWorld g = open_room(12, 12);
  const auto r = execute_waypoint(g, Pose(1.125, 1.125, 0), {0.0, 0.5});
  ASSERT_EQ(r.path.size(), 8u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(r.path[i].action, LowLevelAction::kRotateLeft);
  EXPECT_EQ(r.path[6].action, LowLevelAction::kForward);
  EXPECT_EQ(r.path[7].action, LowLevelAction::kForward);
  EXPECT_EQ(r.pose.heading_index, 6);
  EXPECT_DOUBLE_EQ(r.pose.position.y, 1.625);
}

TEST(ExecuteWaypoint, RightDisplacementUsesFewestTurns) {
  const GridWorld g = open_room(12, 12);
  const auto r = execute_waypoint(g, Pose(1.625, 1.625, 0), {0.0, -0.25});
  ASSERT_EQ(r.path.size(), 7u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(r.path[i].action, LowLevelAction::kRotateRight);
  EXPECT_EQ(r.pose.heading_index, 18);
}

TEST(ExecuteWaypoint, WallAheadCountsOneCollision) {
  const GridWorld g = open_room(8, 8);
  const Pose p(0.375, 0.375, 12);
  const auto r = execute_waypoint(g, p, {0.5, 0.0});
  ASSERT_EQ(r.path.size(), 1u);
  EXPECT_TRUE(r.path[0].collided);
  EXPECT_EQ(r.collisions, 1);
  EXPECT_EQ(r.pose.position, p.position);
}

TEST(ExecuteWaypoint, TinyDisplacementIsNoOp) {
  const GridWorld g = open_room(8, 8);
  const auto r = execute_waypoint(g, Pose(1.125, 1.125, 3), {5e-7, 0.0});
  EXPECT_TRUE(r.path.empty());
  EXPECT_EQ(r.pose, Pose(1.125, 1.125, 3));
}

TEST(ExecuteWaypoint, RejectsDisplacementBeyondMaxStep) {
  const GridWorld g = open_room(8, 8);
  EXPECT_THROW(execute_waypoint(g, Pose(1.125, 1.125, 0), {1.3, 0.0}), ContractError);
}

TEST(ExecuteWaypoint, ForwardCountRoundsUp) {
  EXPECT_EQ(forward_count(0.25), 1);
  EXPECT_EQ(forward_count(0.26), 2);
  EXPECT_EQ(forward_count(0.5), 2);
  EXPECT_EQ(forward_count(1.0), 4);
}

TEST(Panorama, EmptyRoomCenterSeesNothing) {
  const GridWorld g = open_room(48, 48);
  const auto obs = render_panorama(g, Pose(6.0, 6.0, 7));
  for (const auto& v : obs.views) {
    EXPECT_EQ(v.depth, kDefaultMaxRange);
    EXPECT_EQ(v.semantic, kSemanticOpen);
    EXPECT_NEAR(v.sin_heading * v.sin_heading + v.cos_heading * v.cos_heading, 1.0, 1e-12);
  }
}

TEST(Panorama, FacingWallOneMeterAway) {
  const GridWorld g = open_room(24, 24);
  // West wall occupies x in [0, 0.25); agent 1 m from it.
  const auto obs = render_panorama(g, Pose(1.25, 3.0, 12));
  EXPECT_NEAR(obs.views[0].depth, 1.0, 0.125);
  EXPECT_EQ(obs.views[0].semantic, kSemanticWall);
}

TEST(Panorama, MatchesFineRayMarch) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GridWorld g = random_grid(20, 20, 0.15, seed);
    Rng rng(seed * 7 + 1);
    for (int trial = 0; trial < 5; ++trial) {
      const Pose p(random_free_point(g, rng), uniform_int(rng, 0, 23));
      const auto obs = render_panorama(g, p);
      for (int k = 0; k < kViews; ++k) {
        const double angle = (p.heading_index + 2 * k) * kHeadingIncrement;
        const double ref = oracle::march_depth(g, p.position, angle, kDefaultMaxRange);
        // The fine march can slip past an exact corner the traversal treats as blocking.
        if (std::abs(obs.views[k].depth - ref) > 1e-3) {
          EXPECT_LT(obs.views[k].depth, ref) << "seed " << seed << " view " << k;
        }
      }
    }
  }
}

TEST(Panorama, RotationIsCyclicShift) {
  SceneConfig cfg;
  const GridWorld g = generate_scene(Category::kNarrowSpace, 3, cfg);
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose p(random_free_point(g, rng), uniform_int(rng, 0, 23));
    const Pose q(p.position, p.heading_index + kViewStride);
    const auto a = render_panorama(g, p), b = render_panorama(g, q);
    for (int k = 0; k < kViews; ++k) {
      EXPECT_EQ(b.views[k].depth, a.views[(k + 1) % kViews].depth);
      EXPECT_EQ(b.views[k].semantic, a.views[(k + 1) % kViews].semantic);
      EXPECT_EQ(b.views[k].sin_heading, a.views[k].sin_heading);
      EXPECT_EQ(b.views[k].cos_heading, a.views[k].cos_heading);
    }
  }
}

TEST(Panorama, WallNextToLandmarkReportsLandmark) {
  GridWorld g = open_room(12, 12);
  g.landmark[g.index({1, 5})] = 3;
  const auto obs = render_panorama(g, Pose(g.center_of({5, 5}), 12));
  EXPECT_EQ(obs.views[0].semantic, landmark_semantic(3));
}

TEST(Geodesic, StraightCorridor) {
  const GridWorld g = open_room(10, 3);
  const double d = *geodesic_distance(g, g.center_of({2, 1}), g.center_of({6, 1}));
  EXPECT_DOUBLE_EQ(d, 1.0);
}

TEST(Geodesic, SamePointIsZero) {
  const GridWorld g = open_room(6, 6);
  EXPECT_EQ(*geodesic_distance(g, {0.6, 0.7}, {0.6, 0.7}), 0.0);
}

TEST(Geodesic, WallWithOneGapMatchesOracle) {
  GridWorld g = open_room(12, 12);
  for (int y = 1; y < 11; ++y)
    if (y != 8) g.set_occupied({6, y}, true);
  const Vec2 p{0.4, 0.4}, q{2.6, 0.5};
  EXPECT_EQ(*geodesic_distance(g, p, q), *oracle::geodesic(g, p, q));
  EXPECT_GT(*geodesic_distance(g, p, q), distance(p, q) + 1.0);
}

TEST(Geodesic, OccupiedEndpointRejected) {
  const GridWorld g = open_room(6, 6);
  EXPECT_THROW(geodesic_distance(g, {0.1, 0.1}, {0.6, 0.6}), InvalidEndpointError);
  EXPECT_THROW(geodesic_distance(g, {0.6, 0.6}, {0.1, 0.1}), InvalidEndpointError);
}

TEST(Geodesic, DisconnectedIsUnreachable) {
  GridWorld g = open_room(10, 6);
  for (int y = 1; y < 5; ++y) g.set_occupied({5, y}, true);
  EXPECT_FALSE(geodesic_distance(g, g.center_of({2, 2}), g.center_of({7, 2})).has_value());
  EXPECT_FALSE(shortest_path(g, g.center_of({2, 2}), g.center_of({7, 2})).has_value());
}

TEST(Geodesic, NoCornerCutting) {
  GridWorld g = open_room(6, 6);
  g.set_occupied({2, 1}, true);
  // From (1,1) to (2,2) the diagonal passes the corner of the occupied (2,1).
  const double d = *geodesic_distance(g, g.center_of({1, 1}), g.center_of({2, 2}));
  EXPECT_DOUBLE_EQ(d, 0.5);
}

TEST(Geodesic, AgreesWithBellmanFordOnRandomGrids) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GridWorld g = random_grid(16, 16, 0.3, 1000 + seed);
    Rng rng(seed);
    for (int t = 0; t < 5; ++t) {
      const Vec2 p = random_free_point(g, rng), q = random_free_point(g, rng);
      const auto a = geodesic_distance(g, p, q);
      const auto b = oracle::geodesic(g, p, q);
      ASSERT_EQ(a.has_value(), b.has_value());
      if (a) EXPECT_EQ(*a, *b);
    }
  }
}

TEST(Geodesic, SymmetricAndTriangle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GridWorld g = random_grid(16, 16, 0.2, 50 + seed);
    Rng rng(seed);
    for (int t = 0; t < 10; ++t) {
      const Vec2 p = random_free_point(g, rng), q = random_free_point(g, rng), r = random_free_point(g, rng);
      const auto pq = geodesic_distance(g, p, q), qp = geodesic_distance(g, q, p);
      ASSERT_EQ(pq.has_value(), qp.has_value());
      if (!pq) continue;
      EXPECT_EQ(*pq, *qp);
      const auto pr = geodesic_distance(g, p, r), qr = geodesic_distance(g, q, r);
      if (pr && qr) EXPECT_LE(*pr, *pq + *qr + 1e-12);
    }
  }
}

TEST(ShortestPath, StraightCorridorIsCollinear) {
  const GridWorld g = open_room(10, 3);
  const Vec2 p = g.center_of({1, 1}), q = g.center_of({7, 1});
  const auto path = *shortest_path(g, p, q);
  for (const auto& v : path) EXPECT_DOUBLE_EQ(v.y, p.y);
  EXPECT_DOUBLE_EQ(path_length(path), 1.5);
}

TEST(ShortestPath, SamePointIsSingleElement) {
  const GridWorld g = open_room(6, 6);
  const auto path = *shortest_path(g, {0.6, 0.6}, {0.6, 0.6});
  ASSERT_EQ(path.size(), 1u);
}

TEST(ShortestPath, RealizesGeodesicThroughAdjacentFreeCells) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GridWorld g = random_grid(16, 16, 0.25, 300 + seed);
    Rng rng(seed);
    const Vec2 p = random_free_point(g, rng), q = random_free_point(g, rng);
    const auto d = geodesic_distance(g, p, q);
    if (!d) continue;
    const auto path = *shortest_path(g, p, q);
    EXPECT_NEAR(path_length(path), *d, 1e-9);
    EXPECT_EQ(path.front(), p);
    EXPECT_EQ(path.back(), q);
    for (std::size_t i = 1; i < path.size(); ++i) {
      const Cell a = g.cell_of(path[i - 1]), b = g.cell_of(path[i]);
      EXPECT_LE(std::abs(a.x - b.x), 1);
      EXPECT_LE(std::abs(a.y - b.y), 1);
      EXPECT_TRUE(g.is_free(b));
      if (a.x != b.x && a.y != b.y) {
        EXPECT_TRUE(g.is_free(Cell{b.x, a.y}));
        EXPECT_TRUE(g.is_free(Cell{a.x, b.y}));
      }
    }
  }
}

TEST(SceneGen, DeterministicPerSeed) {
  for (auto c : {Category::kOpenArea, Category::kNarrowSpace, Category::kMaze}) {
    EXPECT_EQ(generate_scene(c, 42), generate_scene(c, 42));
    EXPECT_NE(format_scene(generate_scene(c, 42)), format_scene(generate_scene(c, 43)));
  }
}

TEST(SceneGen, InvariantsHoldAcrossSeeds) {
  for (auto c : {Category::kOpenArea, Category::kNarrowSpace, Category::kMaze})
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const GridWorld g = generate_scene(c, seed);
      EXPECT_NO_THROW(g.validate());
      EXPECT_EQ(g.category, c);
      const auto ids = g.landmark_ids();
      EXPECT_GE(ids.size(), 2u) << category_name(c) << " seed " << seed;
      EXPECT_LE(ids.size(), 6u);
      EXPECT_TRUE(detail::connected(g)) << category_name(c) << " seed " << seed;
    }
}

TEST(SceneGen, OpenAreaSparseFill) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const GridWorld g = generate_scene(Category::kOpenArea, seed);
    int occupied = 0, interior = 0;
    for (int y = 1; y < g.height - 1; ++y)
      for (int x = 1; x < g.width - 1; ++x) {
        ++interior;
        occupied += g.is_occupied(Cell{x, y});
      }
    EXPECT_LT(static_cast<double>(occupied) / interior, 0.10);
  }
}

TEST(SceneGen, NarrowSpaceHasNarrowCorridors) {
  // Some free cell has walls on both sides within two cells, horizontally or vertically.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GridWorld g = generate_scene(Category::kNarrowSpace, seed);
    bool found = false;
    for (int y = 1; y < g.height - 1 && !found; ++y)
      for (int x = 1; x < g.width - 1 && !found; ++x) {
        if (g.is_occupied(Cell{x, y})) continue;
        const bool ns = g.is_occupied(Cell{x, y + 1}) && (g.is_occupied(Cell{x, y - 1}) || g.is_occupied(Cell{x, y - 2}));
        const bool ew = g.is_occupied(Cell{x + 1, y}) && (g.is_occupied(Cell{x - 1, y}) || g.is_occupied(Cell{x - 2, y}));
        found = ns || ew;
      }
    EXPECT_TRUE(found);
  }
}

namespace {

// Lattice view of a maze: blocks of 2x2 free cells joined through wall openings.
int count_simple_routes(const GridWorld& g, int from, int to, int cap) {
  const int mx = (g.width - 1) / 3, my = (g.height - 1) / 3;
  auto open = [&](int i, int j, int di, int dj) {
    if (i + di < 0 || j + dj < 0 || i + di >= mx || j + dj >= my) return false;
    if (di != 0) return g.is_free(Cell{3 * std::max(i, i + di), 3 * j + 1});
    return g.is_free(Cell{3 * i + 1, 3 * std::max(j, j + dj)});
  };
  std::vector<char> on(static_cast<std::size_t>(mx * my), 0);
  int routes = 0;
  std::function<void(int)> dfs = [&](int node) {
    if (routes >= cap) return;
    if (node == to) {
      ++routes;
      return;
    }
    on[node] = 1;
    const int i = node % mx, j = node / mx;
    const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const auto& d : dirs)
      if (open(i, j, d[0], d[1])) {
        const int nb = (j + d[1]) * mx + i + d[0];
        if (!on[nb]) dfs(nb);
      }
    on[node] = 0;
  };
  dfs(from);
  return routes;
}

}  // namespace

TEST(SceneGen, MazeHasLandmarkPairWithTwoRoutes) {
  SceneConfig cfg;
  cfg.width = 16;
  cfg.height = 16;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GridWorld g = generate_scene(Category::kMaze, seed, cfg);
    const int mx = (g.width - 1) / 3;
    auto lattice_of = [&](int id) {
      const Cell c = g.cell_of(*g.landmark_center(id));
      return std::min(c.y / 3, mx - 1) * mx + std::min(c.x / 3, mx - 1);
    };
    const auto ids = g.landmark_ids();
    int best = 0;
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = a + 1; b < ids.size(); ++b)
        best = std::max(best, count_simple_routes(g, lattice_of(ids[a]), lattice_of(ids[b]), 2));
    EXPECT_GE(best, 2) << "seed " << seed;
  }
}

TEST(SceneIo, RoundTrip) {
  for (auto c : {Category::kOpenArea, Category::kNarrowSpace, Category::kMaze}) {
    const GridWorld g = generate_scene(c, 5);
    const GridWorld back = parse_scene(format_scene(g), c);
    EXPECT_EQ(back, g);
  }
}

TEST(SceneIo, TopRowIsLargestY) {
  const std::string text = "cells 4 4 0.25\n####\n#A.#\n#..#\n####\n";
  const GridWorld g = parse_scene(text);
  EXPECT_EQ(g.landmark_at({1, 2}), 0);
  EXPECT_EQ(format_scene(g), text);
}

TEST(SceneIo, RejectsMalformed) {
  EXPECT_THROW(parse_scene("cells 4 4\n"), FormatError);
  EXPECT_THROW(parse_scene("cells 4 3 0.25\n####\n#..#\n"), FormatError);
  EXPECT_THROW(parse_scene("cells 4 3 0.25\n####\n#.x#\n####\n"), FormatError);
  EXPECT_THROW(parse_scene("cells 4 3 0.25\n####\n...#\n####\n"), FormatError);
}

TEST(EpisodeIo, RoundTrip) {
  EpisodeRecord e{"scenes/maze_0.txt", Pose(1.125, 2.375, 7), {3.125, 0.625}, {"GO_TO", "B"}};
  const auto line = format_episode(e);
  EXPECT_EQ(line, "scenes/maze_0.txt,1.125,2.375,105,3.125,0.625,GO_TO B");
  EXPECT_EQ(parse_episode(line), e);
  EXPECT_THROW(parse_episode("a,1,2,3"), FormatError);
}
