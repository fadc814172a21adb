#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "difnav/config/run_config.hpp"
#include "difnav/evalkit/evaluate.hpp"
#include "difnav/trainer/gradcheck_suite.hpp"
#include "difnav/trainer/pipeline.hpp"

namespace fs = std::filesystem;
using namespace difnav;

namespace {

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kMissingInput = 3, kBadConfig = 4, kIncompatible = 5 };

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> profile;
  std::string out = "out";
  std::vector<std::string> sets;
};

config::RunConfig resolve(const Options& o) {
  std::string file_text;
  if (!o.config_path.empty()) file_text = read_text_file(o.config_path);
  std::string profile = "desk";
  if (o.profile) {
    profile = *o.profile;
  } else if (!file_text.empty()) {
    config::RunConfig probe;
    probe.merge_text(file_text, o.config_path);
    profile = probe.str("run.profile");
  }
  config::RunConfig c(config::parse_profile(profile));
  if (!file_text.empty()) c.merge_text(file_text, o.config_path);
  for (const auto& kv : o.sets) c.merge_text(kv, "--set");
  if (o.seed) c.set("run.seed", std::to_string(*o.seed));
  if (o.jobs) c.set("run.jobs", std::to_string(*o.jobs));
  c.set("run.profile", profile);
  return c;
}

/// Collects report lines; the resolved config heads every report.
class Report {
 public:
  Report(const config::RunConfig& c, std::string command) {
    text_ = "command=" + command + "\n";
    for (const auto& line : split_lines(c.resolved()))
      if (!line.empty()) text_ += "config " + line + "\n";
    timing_ = c.flag("report.timing");
  }
  void line(const std::string& s) {
    text_ += s;
    if (s.empty() || s.back() != '\n') text_ += "\n";
    std::cerr << s << (s.empty() || s.back() != '\n' ? "\n" : "");
  }
  bool timing() const { return timing_; }
  void write(const fs::path& dir) const { write_text_file(dir / "report.txt", text_); }

 private:
  std::string text_;
  bool timing_ = false;
};

fs::path data_dir(const config::RunConfig& c, const fs::path& out) {
  const auto& d = c.str("paths.data");
  return d.empty() ? out : fs::path(d);
}

instructgen::Dataset load_data(const config::RunConfig& c, const fs::path& out) {
  const fs::path manifest = data_dir(c, out) / "manifest.txt";
  if (!fs::exists(manifest)) throw MissingInputError("dataset manifest not found: " + manifest.string());
  return instructgen::load_dataset(manifest, static_cast<int>(c.integer("policy.n")));
}

fs::path checkpoint_path(const config::RunConfig& c) {
  const auto& p = c.str("paths.checkpoint");
  if (p.empty()) throw MissingInputError("no checkpoint given (set paths.checkpoint)");
  if (!fs::exists(p)) throw MissingInputError("checkpoint not found: " + p);
  return p;
}

trainer::PipelineHooks hooks_for(Report& report, const fs::path& out) {
  trainer::PipelineHooks h;
  h.log = [&report](const std::string& s) { report.line(s); };
  h.checkpoint = [out](const trainer::Policy& p, const std::string& stage) {
    trainer::save_policy(out / (stage + ".ck"), p, stage);
  };
  return h;
}

std::string stage_lines(const std::vector<trainer::StageReport>& stages, bool timing) {
  return trainer::format_report(stages, timing);
}

int gen_scenes(const config::RunConfig& c, const fs::path& out, Report& report) {
  const auto dc = config::dataset_config(c);
  const auto ds = instructgen::build_scenes(dc);
  instructgen::write_scenes(ds, out);
  for (const auto& s : ds.scenes) {
    Digest d;
    d.update(navsim::format_scene(s.grid));
    report.line("scene name=" + s.name + " category=" + std::string(navsim::category_name(s.category)) +
                " unseen=" + (s.unseen ? "1" : "0") + " digest=" + d.hex());
  }
  return kOk;
}

int gen_demos(const config::RunConfig& c, const fs::path& out, Report& report) {
  const auto dc = config::dataset_config(c);
  const fs::path src = data_dir(c, out);
  if (!fs::exists(src / "scenes.txt")) throw MissingInputError("scene index not found: " + (src / "scenes.txt").string());
  auto ds = instructgen::load_scenes(src);
  instructgen::populate_episodes(ds, dc);
  const bool copy_scenes = fs::weakly_canonical(src) != fs::weakly_canonical(out);
  instructgen::write_dataset(ds, out, copy_scenes);
  if (copy_scenes) write_text_file(out / "scenes.txt", instructgen::format_scene_index(ds));
  for (auto sp : {instructgen::Split::kTrain, instructgen::Split::kValSeen, instructgen::Split::kValUnseen})
    report.line("split=" + std::string(instructgen::split_name(sp)) + " episodes=" +
                std::to_string(ds.split(sp).size()));
  report.line("dataset_digest=" + ds.digest());
  return kOk;
}

int train_bc(const config::RunConfig& c, const fs::path& out, Report& report) {
  const auto ds = load_data(c, out);
  const auto pc = config::policy_config(c);
  const auto tc = config::train_config(c);
  auto p = trainer::make_policy(pc, tc.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto logs = trainer::train_bc(p, ds, tc, [&](const std::string& s) { report.line(s); });
  trainer::save_policy(out / "bc.ck", p, "bc");
  report.line(stage_lines({{"bc", logs.back().loss_wp, logs.back().loss_dist, 0, 0.0,
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}},
                          report.timing()));
  return kOk;
}

int train_dagger(const config::RunConfig& c, const fs::path& out, Report& report) {
  const auto ds = load_data(c, out);
  const auto pc = config::policy_config(c);
  trainer::PipelineResult res{trainer::load_policy(checkpoint_path(c), pc), {}, {}, {}};
  trainer::dagger_rounds(res, ds, config::dagger_config(c), config::train_config(c), hooks_for(report, out));
  write_text_file(out / "buffer.txt", trainer::format_buffer(res.buffer));
  report.line(stage_lines(res.stages, report.timing()));
  report.line("buffer_records=" + std::to_string(res.buffer.size()) + " buffer_digest=" + trainer::buffer_digest(res.buffer));
  return kOk;
}

int finetune(const config::RunConfig& c, const fs::path& out, Report& report) {
  const auto ds = load_data(c, out);
  const auto pc = config::policy_config(c);
  const fs::path ck = checkpoint_path(c);
  fs::path buffer = c.str("paths.buffer");
  if (buffer.empty()) buffer = ck.parent_path() / "buffer.txt";
  if (!fs::exists(buffer)) throw MissingInputError("buffer not found: " + buffer.string());
  trainer::PipelineResult res{trainer::load_policy(ck, pc), {}, {}, trainer::parse_buffer(read_text_file(buffer))};
  trainer::finetune(res, ds, config::dagger_config(c), config::train_config(c), hooks_for(report, out));
  report.line(stage_lines(res.stages, report.timing()));
  return kOk;
}

std::vector<instructgen::Episode> eval_episodes(const config::RunConfig& c, const instructgen::Dataset& ds) {
  std::vector<instructgen::Episode> eps;
  for (const auto* e : ds.split(instructgen::parse_split(c.str("eval.split")))) eps.push_back(*e);
  const double perturb = c.real("eval.perturb");
  if (perturb > 0.0) eps = evalkit::perturb_starts(ds, std::move(eps), perturb, static_cast<std::uint64_t>(c.integer("run.seed")));
  return eps;
}

int eval(const config::RunConfig& c, const fs::path& out, Report& report) {
  const auto pc = config::policy_config(c);
  const auto policy = trainer::load_policy(checkpoint_path(c), pc);
  const auto ds = load_data(c, out);
  const auto eps = eval_episodes(c, ds);
  std::vector<navsim::Category> cats;
  for (const auto& name : c.list("dataset.categories")) cats.push_back(navsim::parse_category(name));
  const auto b = evalkit::benchmark_episodes(policy, ds, eps, cats, config::eval_config(c));
  const std::string table = evalkit::format_table(b, c.str("run.profile"));
  write_text_file(out / "table.txt", table);
  write_text_file(out / "table.csv", evalkit::format_table_csv(b));
  write_text_file(out / "episodes.csv", evalkit::format_results_csv(b.episodes));
  report.line(table);
  return kOk;
}

int sample(const config::RunConfig& c, const fs::path& out, Report& report) {
  const auto pc = config::policy_config(c);
  const auto policy = trainer::load_policy(checkpoint_path(c), pc);
  const auto ds = load_data(c, out);
  const auto eps = eval_episodes(c, ds);
  const auto& wanted = c.str("sample.episode");
  const instructgen::Episode* ep = nullptr;
  for (const auto& e : eps)
    if (wanted.empty() || e.id == wanted) {
      ep = &e;
      break;
    }
  if (!ep) throw MissingInputError("episode not found in eval.split: " + (wanted.empty() ? std::string("<empty split>") : wanted));
  const auto& grid = ds.grid_of(*ep);
  trainer::Track track;
  track.push(navsim::render_panorama(grid, ep->start), ep->start.position, 0);
  const auto state = track.state(ep->instruction.tokens, ep->start, pc.encoder.history);
  const auto n = static_cast<std::size_t>(c.integer("sample.count"));
  if (n == 0) throw ParameterError("sample.count must be >= 1");
  Rng rng(derive_seed(static_cast<std::uint64_t>(c.integer("run.seed")), "sample"));
  diffpolicy::SampleTrace trace;
  const std::vector<const encoder::StateInput*> states(n, &state);
  const auto ds_out = trainer::decide(policy, states, rng, &trace);
  std::string s = "episode=" + ep->id + "\n";
  for (std::size_t i = 0; i < ds_out.size(); ++i)
    s += "sample=" + std::to_string(i) + " dx=" + format_double(ds_out[i].displacement.x) +
         " dy=" + format_double(ds_out[i].displacement.y) + " score=" + format_double(ds_out[i].score) + "\n";
  write_text_file(out / "samples.txt", s);
  write_text_file(out / "trace.txt", diffpolicy::format_trace(trace));
  std::vector<navsim::Vec2> norm;
  for (const auto& d : ds_out) norm.push_back(d.displacement * (1.0 / policy.cfg.action_scale()));
  report.line(evalkit::format_multimodality(evalkit::cluster_samples(norm)));
  return kOk;
}

int gradcheck(const config::RunConfig& c, const fs::path& out, Report& report) {
  const auto r = trainer::run_gradcheck_suite(static_cast<std::uint64_t>(c.integer("run.seed")),
                                              c.real("gradcheck.tolerance"));
  const std::string text = trainer::format_gradcheck(r);
  write_text_file(out / "gradcheck.txt", text);
  report.line(text);
  return r.passed() ? kOk : kOther;
}

std::string error_kind(int code) {
  switch (code) {
    case kMissingInput:
      return "missing_input";
    case kBadConfig:
      return "bad_config";
    case kIncompatible:
      return "incompatible_checkpoint";
    default:
      return "error";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"difnav: instruction-conditioned diffusion navigation lab"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "key=value config file");
  app.add_option("--seed", o.seed, "override run.seed");
  app.add_option("--jobs", o.jobs, "override run.jobs");
  app.add_option("--profile", o.profile, "defaults profile: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--out", o.out, "output directory");
  app.add_option("--set", o.sets, "key=value override, repeatable");

  using Runner = int (*)(const config::RunConfig&, const fs::path&, Report&);
  const std::vector<std::pair<std::string, std::pair<Runner, std::string>>> commands{
      {"gen-scenes", {gen_scenes, "generate scenes and the scene index"}},
      {"gen-demos", {gen_demos, "sample episodes, plan demos, write the manifest"}},
      {"train-bc", {train_bc, "behavior cloning on the training demos"}},
      {"train-dagger", {train_dagger, "DAgger rounds from paths.checkpoint; writes the buffer"}},
      {"finetune", {finetune, "fine-tune paths.checkpoint on demos plus the buffer"}},
      {"eval", {eval, "benchmark paths.checkpoint on eval.split"}},
      {"sample", {sample, "draw diffusion samples at an episode start, with a sampler trace"}},
      {"gradcheck", {gradcheck, "finite-difference checks of every layer and the full loss"}},
  };
  std::vector<std::pair<CLI::App*, Runner>> subs;
  for (const auto& [name, v] : commands) subs.emplace_back(app.add_subcommand(name, v.second), v.first);
  for (auto& [sub, runner] : subs) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error code=usage message=" << e.what() << "\n";
    return kUsage;
  }

  int code = kOther;
  try {
    const auto cfg = resolve(o);
    for (auto& [sub, runner] : subs) {
      if (!sub->parsed()) continue;
      const fs::path out = o.out;
      fs::create_directories(out);
      write_text_file(out / "config.resolved", cfg.resolved());
      Report report(cfg, sub->get_name());
      code = runner(cfg, out, report);
      report.write(out);
    }
    return code;
  } catch (const MissingInputError& e) {
    code = kMissingInput;
    std::cerr << "error code=" << error_kind(code) << " message=" << e.what() << "\n";
  } catch (const ConfigError& e) {
    code = kBadConfig;
    std::cerr << "error code=" << error_kind(code) << " message=" << e.what() << "\n";
  } catch (const ParameterError& e) {
    code = kBadConfig;
    std::cerr << "error code=" << error_kind(code) << " message=" << e.what() << "\n";
  } catch (const VersionError& e) {
    code = kIncompatible;
    std::cerr << "error code=" << error_kind(code) << " message=" << e.what() << "\n";
  } catch (const std::exception& e) {
    code = kOther;
    std::cerr << "error code=" << error_kind(code) << " message=" << e.what() << "\n";
  }
  return code;
}
