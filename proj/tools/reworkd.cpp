// reworkd: batch pipeline for rework-policy learning.
//
//   reworkd run --config c.json --out dir
//   reworkd simulate --config c.json --out dir
//   reworkd estimate --in dir      (then cate, policy, evaluate, sensitivity, diagnose, report)
//
// Exit status: 0 ok, 1 invalid input or configuration, 2 estimation failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rework/error.hpp"
#include "rework/pipeline.hpp"

namespace {

rework::PipelineConfig config_from(const std::string& path, std::optional<std::uint64_t> seed) {
  rework::PipelineConfig cfg = path.empty() ? rework::PipelineConfig{} : rework::load_config(path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

int exit_code(const rework::Error& e) { return e.category() == rework::ErrorCategory::validation ? 1 : 2; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rework policy learning pipeline"};
  app.require_subcommand(1);

  std::string config_path, in_dir, out_dir, stage_name;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "run every stage (or up to --stage)");
  run->add_option("--config", config_path, "pipeline config JSON (defaults when omitted)");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "master seed override");
  run->add_option("--stage", stage_name, "last stage to run");

  auto* sim = app.add_subcommand("simulate", "simulate (or load the configured input) and write config.json");
  sim->add_option("--config", config_path, "pipeline config JSON (defaults when omitted)");
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--seed", seed, "master seed override");

  std::vector<CLI::App*> stages;
  for (const char* name : {"estimate", "cate", "policy", "evaluate", "sensitivity", "diagnose", "report"}) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " stage");
    sub->add_option("--in", in_dir, "run directory holding upstream artifacts")->required();
    sub->add_option("--out", out_dir, "where to write (defaults to --in)");
    stages.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      rework::PipelineConfig cfg = config_from(config_path, seed);
      const std::string out = out_dir.empty() ? cfg.output_dir : out_dir;
      const rework::Stage last = stage_name.empty() ? rework::Stage::report : rework::stage_from_string(stage_name);
      rework::run_pipeline(cfg, out, last);
      std::cout << "wrote " << out << "\n";
    } else if (sim->parsed()) {
      const rework::PipelineConfig cfg = config_from(config_path, seed);
      rework::DirLock lock(out_dir);
      rework::run_simulate(cfg, {out_dir, out_dir});
    } else {
      for (auto* sub : stages) {
        if (!sub->parsed()) continue;
        const std::string out = out_dir.empty() ? in_dir : out_dir;
        rework::DirLock lock(out);
        rework::run_stage(rework::stage_from_string(sub->get_name()), {in_dir, out});
      }
    }
  } catch (const rework::Error& e) {
    std::cerr << "reworkd: " << rework::to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "reworkd: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
