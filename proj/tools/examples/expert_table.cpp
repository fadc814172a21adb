// Generates a small dataset and prints the metric table of the geodesic expert on every split.

#include <cstdio>

#include "difnav/config/run_config.hpp"
#include "difnav/evalkit/evaluate.hpp"

using namespace difnav;

int main(int argc, char** argv) {
  config::RunConfig cfg;
  if (argc > 1) cfg.set("run.seed", argv[1]);
  const auto dcfg = config::dataset_config(cfg);
  const auto ds = instructgen::build_dataset(dcfg);
  const auto ec = config::eval_config(cfg);
  const auto pc = config::policy_config(cfg);
  const auto dc = config::dagger_config(cfg);
  std::vector<evalkit::EpisodeResult> results;
  for (const auto& e : ds.episodes)
    results.push_back(evalkit::run_expert(ds.grid_of(e), e, ds.category_of(e), ec, pc.action_scale(), dc.expert_radius));
  const auto table = evalkit::summarize(results, dcfg.categories);
  std::printf("%s", evalkit::format_table(table, cfg.str("run.profile")).c_str());
}
