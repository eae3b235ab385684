#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "neo/error.hpp"
#include "neo/parallel.hpp"
#include "neo/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  bool force = false;
  bool quiet = false;
  std::vector<double> intervals;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Field-of-view extrapolation pipeline: radiance field, pose sampling, "
               "outpainting and baselines"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("-c,--config", opt.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("-o,--out", opt.out, "Output directory (overrides output_dir in the config)");
  auto* seed = app.add_option("--seed", opt.seed, "Global seed (overrides the config)");
  app.add_option("--threads", opt.threads, "Worker cap, 0 = all cores")->check(CLI::NonNegativeNumber);
  app.add_flag("--force", opt.force, "Overwrite artifacts stamped by a different configuration");
  app.add_flag("-q,--quiet", opt.quiet, "Only print errors");

  const std::vector<std::pair<std::string, std::string>> stages{
      {"scene-gen", "Build the procedural scene"},
      {"render-train", "Render ground-truth training and test views"},
      {"fit-field", "Fit the voxel radiance field to the training views"},
      {"sample-poses", "Sample novel poses over the walkable area"},
      {"gen-dataset", "Render small/large training pairs from the field"},
      {"train-outpainter", "Train the outpainting model on the rendered pairs"},
      {"train-naive", "Train the naive outpainting baseline"},
      {"run-baselines", "Produce every method's outputs on the test views"},
      {"eval", "Score the outputs and write report.json / report.md"},
      {"run-all", "Run every stage in order"}};
  std::vector<CLI::App*> stage_cmds;
  for (const auto& [name, help] : stages) stage_cmds.push_back(app.add_subcommand(name, help));

  auto* ablate = app.add_subcommand("ablate", "Ablation studies");
  ablate->require_subcommand(1);
  auto* density = ablate->add_subcommand("density", "Retrain NEO at several sampling intervals");
  density->add_option("--intervals", opt.intervals, "Grid intervals in metres")->delimiter(',');
  auto* fov = ablate->add_subcommand("fov", "Original-FOV versus extended-FOV training pairs");

  CLI11_PARSE(app, argc, argv);
  opt.seed_given = seed->count() > 0;

  std::string command = app.get_subcommands().front()->get_name();
  if (command == "ablate") command += " " + ablate->get_subcommands().front()->get_name();

  const auto t0 = std::chrono::steady_clock::now();
  neo::Logger log;
  if (!opt.quiet) {
    log = [t0](const std::string& msg) {
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "%8.1fs %s\n", s, msg.c_str());
    };
  }

  try {
    neo::set_thread_count(opt.threads);
    auto cfg = neo::load_config(opt.config);
    if (opt.seed_given) cfg.seed = opt.seed;
    const std::string out = opt.out.empty() ? cfg.output_dir : opt.out;
    neo::Pipeline p(cfg, out, opt.force, log);

    if (command == "scene-gen") p.scene_gen();
    else if (command == "render-train") p.render_train();
    else if (command == "fit-field") p.fit_field();
    else if (command == "sample-poses") p.sample_poses();
    else if (command == "gen-dataset") p.gen_dataset();
    else if (command == "train-outpainter") p.train_outpainter();
    else if (command == "train-naive") p.train_naive();
    else if (command == "run-baselines") p.run_baselines();
    else if (command == "eval") p.eval();
    else if (command == "run-all") p.run_all();
    else if (density->parsed()) {
      p.ablate_density(opt.intervals.empty() ? cfg.ablation.density_intervals : opt.intervals);
    } else if (fov->parsed()) {
      p.ablate_fov();
    }
  } catch (const neo::Error& e) {
    std::fprintf(stderr, "neo %s: %s: %s\n", command.c_str(),
                 std::string(neo::to_string(e.kind())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "neo %s: error: %s\n", command.c_str(), e.what());
    return 1;
  }
  return 0;
}
