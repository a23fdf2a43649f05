// Command-line front end: generate, train, evaluate, replicate.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "shipid/commands.hpp"
#include "shipid/evaluate.hpp"
#include "shipid/keyvalue.hpp"

using namespace shipid;

int main(int argc, char** argv) {
  CLI::App app{"Ship maneuvering model identification"};
  app.set_version_flag("--version", std::string(SHIPID_VERSION));
  app.require_subcommand(1);

  GenerateArgs gen;
  std::string dt_text;
  std::string coeffs_path;
  auto* g = app.add_subcommand("generate", "Synthesize a dataset from a recipe");
  g->add_option("--recipe", gen.recipe, "Recipe file (key = value)")->required();
  g->add_option("--out", gen.out, "Output dataset file")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--dt", dt_text, "Sample interval [s], overrides the recipe");
  g->add_option("--coeffs", coeffs_path, "Reference-model coefficient file");

  TrainArgs tr;
  std::string config_path;
  std::string arch_text = "finite";
  std::string loss_text = "state";
  auto* t = app.add_subcommand("train", "Train a recurrent model on a dataset");
  t->add_option("--data", tr.data, "Training dataset")->required();
  t->add_option("--config", config_path, "Training config (key = value)");
  t->add_option("--arch", arch_text, "full | finite");
  t->add_option("--loss", loss_text, "acc | state");
  t->add_option("--out", tr.out, "Checkpoint file")->required();
  t->add_option("--seed", tr.seed, "Random seed");
  t->add_option("--jobs", tr.jobs, "Worker threads for loss evaluation");
  t->add_flag("--timing", tr.timing, "Record wall time per epoch in the log");

  EvaluateArgs ev;
  std::string baseline_path;
  double restart = -1.0;
  bool no_plots = false;
  auto* e = app.add_subcommand("evaluate", "Score checkpoints on a test dataset");
  e->add_option("--checkpoint", ev.checkpoints, "Checkpoint file (repeatable)");
  e->add_option("--test", ev.test, "Test dataset")->required();
  e->add_option("--out", ev.out_dir, "Output directory")->required();
  e->add_option("--baseline", baseline_path, "Reference-model coefficients to score alongside");
  e->add_option("--restart-period", restart,
                "Restart period [s]; 0 disables restarts. Default depends on the class");
  e->add_flag("--no-plots", no_plots, "Skip the plot CSVs");

  ReplicateArgs rep;
  std::string study_text;
  std::string rep_config;
  auto* r = app.add_subcommand("replicate", "Run a comparison study end to end");
  r->add_option("--study", study_text, "loss-comparison | arch-comparison | data-comparison")
      ->required();
  r->add_option("--out", rep.out_dir, "Output directory")->required();
  r->add_option("--seed", rep.seed, "First seed");
  r->add_option("--seeds", rep.seeds, "Number of training seeds");
  r->add_option("--jobs", rep.jobs, "Concurrent training runs");
  r->add_option("--config", rep_config, "Training config overriding the built-in one");
  r->add_option("--duration", rep.data_duration, "Seconds of TZRB-equivalent training data");
  r->add_flag("--paper-scale", rep.paper_scale, "Full-size data and network");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (g->parsed()) {
      if (!dt_text.empty()) gen.dt = parse_double(dt_text, "--dt");
      if (!coeffs_path.empty()) gen.coeffs = coeffs_path;
      cmd_generate(gen);
    } else if (t->parsed()) {
      tr.arch = parse_arch(arch_text);
      tr.loss = parse_loss(loss_text);
      if (!config_path.empty()) tr.config = config_path;
      cmd_train(tr);
    } else if (e->parsed()) {
      if (!baseline_path.empty()) ev.baseline = baseline_path;
      if (restart == 0.0) {
        ev.restart_period = kNoRestart;
      } else if (restart > 0.0) {
        ev.restart_period = restart;
      } else if (e->count("--restart-period") > 0) {
        throw UsageError("--restart-period must be >= 0");
      }
      ev.plots = !no_plots;
      cmd_evaluate(ev);
    } else if (r->parsed()) {
      rep.study = parse_study(study_text);
      if (!rep_config.empty()) rep.config = rep_config;
      cmd_replicate(rep);
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitOther;
  }
  return kExitOk;
}
