#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "difnav/instructgen/dataset.hpp"

using namespace difnav;
using namespace difnav::instructgen;
using navsim::Cell;

namespace {

GridWorld from_rows(const std::vector<std::string>& rows) {
  std::string text = "cells " + std::to_string(rows[0].size()) + " " + std::to_string(rows.size()) + " 0.25\n";
  for (const auto& r : rows) text += r + "\n";
  return navsim::parse_scene(text);
}

GridWorld straight_corridor() {
  return from_rows({"############", "#.........B#", "############"});
}

GridWorld l_corridor() {
  return from_rows({"##########",
                    "#######B##",
                    "#######.##",
                    "#######.##",
                    "#######.##",
                    "#######.##",
                    "#######.##",
                    "#######.##",
                    "#.......A#",
                    "##########"});
}

bool walkable(const GridWorld& g, const Pose& a, const Pose& b) {
  const auto r = navsim::step_low(g, Pose(a.position, b.heading_index), navsim::LowLevelAction::kForward);
  return !r.collided && navsim::distance(r.pose.position, b.position) < 1e-9;
}

}  // namespace

TEST(Vocabulary, FileMatchesBuiltin) {
  const auto v = Vocabulary::load(std::filesystem::path(DIFNAV_DATA_DIR) / "vocab.txt");
  EXPECT_EQ(v, Vocabulary::builtin());
  EXPECT_LE(v.size(), 64u);
  EXPECT_EQ(v.token(v.id("STOP_AT")), "STOP_AT");
  EXPECT_EQ(v.format(), read_text_file(std::filesystem::path(DIFNAV_DATA_DIR) / "vocab.txt"));
}

TEST(Vocabulary, UnknownTokenRejected) {
  EXPECT_THROW(Vocabulary::builtin().id("JUMP"), VocabularyError);
  EXPECT_THROW(Vocabulary::builtin().token(999), VocabularyError);
  EXPECT_THROW(validate_instruction(Instruction{{1, 2, 500}}, Vocabulary::builtin()), VocabularyError);
  EXPECT_THROW(Vocabulary::parse("0 A\n2 B\n"), FormatError);
}

TEST(PlanDemo, StraightCorridorIsCollinear) {
  const GridWorld g = straight_corridor();
  const Pose start(g.center_of({1, 1}), 0);
  const Vec2 goal = g.center_of({10, 1});
  const auto t = plan_demo(g, start, goal);
  ASSERT_EQ(t.dense.size(), 10u);
  for (std::size_t i = 0; i < t.dense.size(); ++i) {
    EXPECT_DOUBLE_EQ(t.dense[i].position.y, start.position.y);
    EXPECT_DOUBLE_EQ(t.dense[i].position.x, start.position.x + 0.25 * static_cast<double>(i));
  }
}

TEST(PlanDemo, StartEqualsGoalIsSinglePose) {
  const GridWorld g = straight_corridor();
  const Pose start(g.center_of({3, 1}), 5);
  const auto t = plan_demo(g, start, start.position);
  ASSERT_EQ(t.dense.size(), 1u);
  EXPECT_EQ(t.dense[0], start);
}

TEST(PlanDemo, UnreachableGoalRejected) {
  const GridWorld g = from_rows({"#######", "#..#..#", "#######"});
  EXPECT_THROW(plan_demo(g, Pose(g.center_of({1, 1}), 0), g.center_of({5, 1})), EpisodeGenerationError);
}

TEST(PlanDemo, WalkableAndCloseToGeodesic) {
  DatasetConfig cfg;
  cfg.interval = 1;
  for (auto c : {Category::kOpenArea, Category::kNarrowSpace, Category::kMaze}) {
    const GridWorld g = navsim::generate_scene(c, 9);
    Rng rng(4);
    for (int k = 0; k < 15; ++k) {
      const Episode e = sample_episode(g, cfg, rng);
      const auto& d = e.demo.dense;
      for (std::size_t i = 1; i < d.size(); ++i) {
        EXPECT_LE(navsim::distance(d[i - 1].position, d[i].position), 0.25 + 1e-9);
        EXPECT_TRUE(walkable(g, d[i - 1], d[i]));
      }
      EXPECT_LT(navsim::distance(d.back().position, e.goal), 0.25);
      const double len = 0.25 * static_cast<double>(d.size() - 1);
      EXPECT_NEAR(len, e.initial_geodesic, 0.1 * e.initial_geodesic) << navsim::category_name(c);
    }
  }
}

TEST(Sparsify, IntervalOneIsIdentity) {
  const GridWorld g = straight_corridor();
  const auto t = plan_demo(g, Pose(g.center_of({1, 1}), 0), g.center_of({10, 1}));
  EXPECT_EQ(sparsify(t, 1).sparse, t.dense);
}

TEST(Sparsify, IntervalTwoOnTenSteps) {
  const GridWorld g = from_rows({"#############", "#..........B#", "#############"});
  const auto t = plan_demo(g, Pose(g.center_of({1, 1}), 0), g.center_of({11, 1}));
  ASSERT_EQ(t.dense.size(), 11u);
  const auto s = sparsify(t, 2);
  ASSERT_EQ(s.sparse.size(), 6u);
  for (std::size_t i = 1; i < s.sparse.size(); ++i)
    EXPECT_DOUBLE_EQ(navsim::distance(s.sparse[i - 1].position, s.sparse[i].position), 0.5);
}

TEST(Sparsify, IntervalFourSpacingOneMeter) {
  const GridWorld g = from_rows({"###################", "#................B#", "###################"});
  const auto t = plan_demo(g, Pose(g.center_of({1, 1}), 0), g.center_of({17, 1}));
  ASSERT_EQ(t.dense.size(), 17u);
  const auto s = sparsify(t, 4);
  ASSERT_EQ(s.sparse.size(), 5u);
  for (std::size_t i = 1; i < s.sparse.size(); ++i)
    EXPECT_DOUBLE_EQ(navsim::distance(s.sparse[i - 1].position, s.sparse[i].position), 1.0);
}

TEST(Sparsify, RejectsNonPositiveInterval) {
  DemoTrajectory t;
  t.dense = {Pose(0.5, 0.5, 0)};
  EXPECT_THROW(sparsify(t, 0), ParameterError);
}

TEST(Sparsify, KeepsFinalPose) {
  DemoTrajectory t;
  for (int i = 0; i < 8; ++i) t.dense.push_back(Pose(0.375 + 0.25 * i, 0.375, 0));
  const auto s = sparsify(t, 3);
  ASSERT_EQ(s.sparse.size(), 4u);  // 0, 3, 6, 7
  EXPECT_EQ(s.sparse.back(), t.dense.back());
}

TEST(Dataset, SparseDisplacementsBounded) {
  for (int n : {1, 2, 4}) {
    DatasetConfig cfg;
    cfg.interval = n;
    cfg.categories = {Category::kOpenArea, Category::kNarrowSpace};
    cfg.scenes_per_category = 2;
    cfg.episodes_per_scene = 5;
    const Dataset ds = build_dataset(cfg);
    for (const auto& e : ds.episodes) {
      const auto a = sparse_actions(e.demo);
      for (std::size_t i = 0; i + 1 < a.size(); ++i) {
        EXPECT_GT(a[i].norm(), 0.0);
        EXPECT_LE(a[i].norm(), n * 0.25 + 0.125 + 1e-9);
      }
      EXPECT_EQ(a.back(), (Vec2{0.0, 0.0}));
    }
  }
}

TEST(Dataset, SparseReplayReachesGoal) {
  for (int n : {1, 2}) {
    DatasetConfig cfg;
    cfg.interval = n;
    cfg.scenes_per_category = 3;
    cfg.episodes_per_scene = 10;
    cfg.seed = 17;
    const Dataset ds = build_dataset(cfg);
    int ok = 0;
    for (const auto& e : ds.episodes) {
      const auto r = replay_sparse(ds.grid_of(e), e.demo);
      ok += r.collisions == 0 && navsim::distance(r.final_pose.position, e.goal) < 0.5;
    }
    EXPECT_GE(ok, static_cast<int>(0.95 * static_cast<double>(ds.episodes.size()))) << "n=" << n;
  }
}

TEST(Describe, StraightPathToLandmark) {
  const GridWorld g = straight_corridor();
  const auto t = plan_demo(g, Pose(g.center_of({1, 1}), 0), *g.landmark_center(1));
  EXPECT_EQ(describe_words(t, g, Ambiguity::kRouteLevel), (std::vector<std::string>{"FORWARD", "STOP_AT", "B"}));
}

TEST(Describe, LeftTurnAtLandmark) {
  const GridWorld g = l_corridor();
  const auto t = plan_demo(g, Pose(g.center_of({1, 1}), 0), *g.landmark_center(1));
  const auto w = describe_words(t, g, Ambiguity::kRouteLevel);
  const std::vector<std::string> clause{"LEFT", "AT", "A"};
  EXPECT_NE(std::search(w.begin(), w.end(), clause.begin(), clause.end()), w.end());
  EXPECT_EQ(w.back(), "B");
}

TEST(Describe, OrdinalWhenNoLandmarkNearTurn) {
  const GridWorld g = from_rows({"##########", "#######B##", "#######.##", "#######.##", "#######.##", "#######.##",
                                 "#######.##", "#######.##", "#######.##", "#######.##", "#######.##", "#........#",
                                 "##########"});
  const auto t = plan_demo(g, Pose(g.center_of({1, 1}), 0), *g.landmark_center(1));
  const auto w = describe_words(t, g, Ambiguity::kRouteLevel);
  const std::vector<std::string> clause{"LEFT", "AT", "FIRST"};
  EXPECT_NE(std::search(w.begin(), w.end(), clause.begin(), clause.end()), w.end());
}

TEST(Describe, GoalOnlyIsShort) {
  const GridWorld g = l_corridor();
  const auto t = plan_demo(g, Pose(g.center_of({1, 1}), 0), *g.landmark_center(1));
  const auto ins = describe(t, g, Ambiguity::kGoalOnly);
  EXPECT_LE(ins.tokens.size(), 4u);
  EXPECT_EQ(Vocabulary::builtin().decode(ins.tokens), (std::vector<std::string>{"GO_TO", "B"}));
}

TEST(Describe, GeneratedInstructionsValid) {
  DatasetConfig cfg;
  cfg.episodes_per_scene = 6;
  const Dataset ds = build_dataset(cfg);
  for (const auto& e : ds.episodes) {
    EXPECT_NO_THROW(validate_instruction(e.instruction, Vocabulary::builtin()));
    const auto w = Vocabulary::builtin().decode(e.instruction.tokens);
    ASSERT_GE(w.size(), 2u);
    EXPECT_TRUE(w[w.size() - 2] == "STOP_AT" || w[w.size() - 2] == "STOP");
  }
}

TEST(Dataset, DeterministicDigest) {
  DatasetConfig cfg;
  cfg.episodes_per_scene = 4;
  cfg.seed = 3;
  EXPECT_EQ(build_dataset(cfg).digest(), build_dataset(cfg).digest());
  DatasetConfig other = cfg;
  other.seed = 4;
  EXPECT_NE(build_dataset(cfg).digest(), build_dataset(other).digest());
}

TEST(Dataset, SizeAndSplits) {
  DatasetConfig cfg;
  cfg.scenes_per_category = 3;
  cfg.episodes_per_scene = 5;
  const Dataset ds = build_dataset(cfg);
  EXPECT_EQ(ds.episodes.size(), 3u * 3u * 5u);
  std::set<std::size_t> train_scenes, unseen_scenes;
  for (const auto& e : ds.episodes) {
    if (e.split == Split::kTrain) train_scenes.insert(e.scene);
    if (e.split == Split::kValUnseen) unseen_scenes.insert(e.scene);
  }
  EXPECT_EQ(unseen_scenes.size(), 3u);
  for (auto s : unseen_scenes) EXPECT_FALSE(train_scenes.count(s));
  EXPECT_EQ(ds.split(Split::kValSeen).size(), 3u * 2u);
}

TEST(Dataset, WriteLoadRoundTrip) {
  DatasetConfig cfg;
  cfg.episodes_per_scene = 4;
  cfg.seed = 8;
  const Dataset ds = build_dataset(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "difnav_dataset_roundtrip";
  std::filesystem::remove_all(dir);
  const auto manifest = write_dataset(ds, dir);
  EXPECT_EQ(parse_manifest(read_text_file(dir / "manifest.txt")), manifest);
  const Dataset back = load_dataset(dir / "manifest.txt", cfg.interval);
  EXPECT_EQ(back.digest(), ds.digest());
  std::filesystem::remove_all(dir);
}

TEST(Manifest, RejectsMalformed) {
  EXPECT_THROW(parse_manifest("train,maze,a.txt\n"), FormatError);
  EXPECT_THROW(parse_manifest("test,maze,a.txt,b.txt\n"), FormatError);
  EXPECT_THROW(parse_manifest("train,stairs,a.txt,b.txt\n"), ParameterError);
}
