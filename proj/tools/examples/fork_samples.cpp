// Trains a diffusion policy and an MSE regression policy on the two-route fork and prints where each
// puts its first waypoint.

#include <cstdio>

#include "difnav/config/run_config.hpp"
#include "difnav/evalkit/evaluate.hpp"
#include "difnav/evalkit/fork.hpp"
#include "difnav/trainer/pipeline.hpp"

using namespace difnav;

int main() {
  const config::RunConfig cfg;
  const auto fork = evalkit::make_fork(32, 32);
  auto pc = config::policy_config(cfg);
  auto tc = config::train_config(cfg);
  tc.epochs = 1500;
  tc.lr = 3e-3;

  const auto records = trainer::dataset_records(fork.dataset, instructgen::Split::kTrain, pc);
  std::vector<const trainer::StepRecord*> decisions;
  for (const auto& r : records)
    if (r.history.size() == 1) decisions.push_back(&r);

  auto diffusion = trainer::make_policy(pc, tc.seed);
  trainer::train_records(diffusion, decisions, tc, "fork");
  pc.regression = true;
  auto regression = trainer::make_policy(pc, tc.seed);
  trainer::train_records(regression, decisions, tc, "fork_regression");

  trainer::Track track;
  track.push(navsim::render_panorama(fork.dataset.scenes.front().grid, fork.start), fork.start.position, 0);
  const auto state = track.state(fork.dataset.episodes.front().instruction.tokens, fork.start, pc.encoder.history);
  std::printf("%s", evalkit::format_multimodality(evalkit::multimodality_report(diffusion, state, 200, 1, &regression)).c_str());
}
