#include <gtest/gtest.h>

#include <cmath>

#include "difnav/gradcore/gradcheck.hpp"
#include "difnav/progress/progress.hpp"
#include "nn_oracle.hpp"
#include "oracles.hpp"

using namespace difnav;
using namespace difnav::progress;
namespace no = nn_oracle;

namespace {

navsim::GridWorld corridor() {
  navsim::GridWorld g(14, 3, navsim::Category::kNarrowSpace);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 14; ++x) g.set_occupied({x, y}, y != 1 || x == 0 || x == 13);
  return g;
}

ParamStore<double> store(const ProgressConfig& c, std::uint64_t seed) {
  ParamStore<double> s;
  Rng rng(seed);
  add_progress_params(s, c, rng);
  for (auto& [name, t] : s)
    for (auto& v : t.data) v += 0.05 * standard_normal(rng);
  return s;
}

std::vector<double> gaussian(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

}  // namespace

TEST(NormalizedDistance, EndpointsAndMidpoint) {
  const auto g = corridor();
  const navsim::Vec2 start{0.375, 0.375}, goal{3.125, 0.375};
  const double init = *navsim::geodesic_distance(g, start, goal);
  EXPECT_EQ(normalized_distance(g, goal, goal, init).value, 0.0);
  EXPECT_EQ(normalized_distance(g, start, goal, init).value, 1.0);
  const navsim::Vec2 mid{1.75, 0.375};
  const double want = *oracle::geodesic(g, mid, goal) / *oracle::geodesic(g, start, goal);
  EXPECT_NEAR(want, 0.5, 1e-12);
  EXPECT_NEAR(normalized_distance(g, mid, goal, init).value, want, 1e-12);
  EXPECT_THROW(normalized_distance(g, mid, goal, 0.0), ParameterError);
}

TEST(NormalizedDistance, UnreachableIsWorstCaseAndFlagged) {
  auto g = corridor();
  g.set_occupied({7, 1}, true);
  const auto r = normalized_distance(g, {0.375, 0.375}, {3.125, 0.375}, 2.0);
  EXPECT_TRUE(r.unreachable);
  EXPECT_EQ(r.value, 1.0);
}

TEST(PredictDistance, ZeroFinalLayerGivesHalf) {
  ProgressConfig c;
  c.in_dim = 8;
  c.hidden = 16;
  auto s = store(c, 1);
  for (auto& v : s.get("pg.fc3.w").data) v = 0;
  for (auto& v : s.get("pg.fc3.b").data) v = 0;
  Rng rng(2);
  Graph<double> g(&s);
  for (double v : predict_distance(g, c, g.constant({5, 8}, gaussian(40, rng))).value()) EXPECT_EQ(v, 0.5);
}

TEST(PredictDistance, BoundedAndMatchesOracle) {
  ProgressConfig c;
  c.in_dim = 8;
  c.hidden = 16;
  const auto s = store(c, 3);
  Rng rng(4);
  const auto x = gaussian(4 * 8, rng);
  Graph<double> g(&s);
  const auto out = predict_distance(g, c, g.constant({4, 8}, x)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    no::Mat h = no::linear(s, "pg.fc1", {no::Vec(x.begin() + 8 * i, x.begin() + 8 * i + 8)});
    for (double& v : h[0]) v = std::max(v, 0.0);
    h = no::linear(s, "pg.fc2", h);
    for (double& v : h[0]) v = std::max(v, 0.0);
    const double z = no::linear(s, "pg.fc3", h)[0][0];
    EXPECT_NEAR(out[i], 1.0 / (1.0 + std::exp(-z)), 1e-14);
    EXPECT_GE(out[i], 0.0);
    EXPECT_LE(out[i], 1.0);
  }
  Rng big(5);
  std::vector<double> wild = gaussian(50 * 8, big);
  for (auto& v : wild) v *= 100;
  for (double v : predict_distance(g, c, g.constant({50, 8}, wild)).value()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  ProgressConfig cls = c;
  cls.mode = StopMode::kClassify;
  EXPECT_THROW(predict_distance(g, cls, g.constant({1, 8}, std::vector<double>(8))), ContractError);
}

TEST(DistanceLoss, PerfectZeroAndLambdaZero) {
  ProgressConfig c;
  c.in_dim = 8;
  c.hidden = 16;
  const auto s = store(c, 6);
  Rng rng(7);
  const auto x = gaussian(3 * 8, rng);
  Graph<double> g(&s);
  const auto pred = predict_distance(g, c, g.constant({3, 8}, x)).value();
  EXPECT_NEAR(distance_loss(g, c, g.constant({3, 8}, x), pred, {}).item(), 0.0, 1e-20);
  ProgressConfig zero = c;
  zero.lambda = 0.0;
  EXPECT_EQ(distance_loss(g, zero, g.constant({3, 8}, x), {0.9, 0.1, 0.4}, {}).item(), 0.0);
}

TEST(DistanceLoss, HalfHeadOnUniformTargets) {
  ProgressConfig c;
  c.in_dim = 8;
  c.hidden = 16;
  auto s = store(c, 8);
  for (auto& v : s.get("pg.fc3.w").data) v = 0;
  for (auto& v : s.get("pg.fc3.b").data) v = 0;
  Rng rng(9);
  const std::size_t n = 20000;
  std::vector<double> t(n);
  for (auto& v : t) v = uniform01(rng);
  Graph<double> g(&s, false);
  const double loss = distance_loss(g, c, g.constant({n, 8}, gaussian(n * 8, rng)), t, {}).item();
  // Var[(U - 1/2)^2] = 1/180, so the sample mean has standard error sqrt(1/180/n).
  EXPECT_NEAR(loss / c.lambda, 1.0 / 12.0, 4.0 * std::sqrt(1.0 / 180.0 / n));
}

TEST(DistanceLoss, GradientsMatchFiniteDifferences) {
  for (StopMode m : {StopMode::kDistance, StopMode::kClassifyWeighted}) {
    ProgressConfig c;
    c.mode = m;
    c.in_dim = 6;
    c.hidden = 10;
    c.lambda = 1.0;
    auto s = store(c, 10);
    Rng rng(11);
    const auto x = gaussian(4 * 6, rng);
    const std::vector<double> d{0.1, 0.5, 0.9, 0.3}, r{1, 0, 0, 1};
    const auto res = gradcore::check_gradients(
        s, [&](Graph<double>& g) { return distance_loss(g, c, g.constant({4, 6}, x), d, r); }, 1e-5);
    EXPECT_LT(res.max_rel_error(), 1e-4) << stop_mode_name(m);
  }
}

TEST(ShouldStop, ThresholdAndCap) {
  ProgressConfig c;
  EXPECT_TRUE(should_stop(0.05, 1, c));
  EXPECT_FALSE(should_stop(0.1, 1, c));
  EXPECT_FALSE(should_stop(0.7, 39, c));
  EXPECT_TRUE(should_stop(0.7, 40, c));
  c.mode = StopMode::kClassify;
  EXPECT_TRUE(should_stop(0.8, 3, c));
  EXPECT_FALSE(should_stop(0.2, 3, c));
  EXPECT_EQ(parse_stop_mode("classify_weighted"), StopMode::kClassifyWeighted);
  EXPECT_THROW(parse_stop_mode("x"), ParameterError);
}
