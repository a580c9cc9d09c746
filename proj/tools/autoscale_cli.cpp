// Experiment runner: calibrate, train, train-sweep, evaluate, report, simulate.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "autoscale/experiment.hpp"

namespace fs = std::filesystem;
using namespace autoscale;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<int> workers;
  std::optional<std::string> agent;
  std::vector<std::string> bands;
  bool deterministic = false;
  bool resume = false;
  std::optional<std::string> out;
  std::vector<std::string> targets;
  std::string baseline = "kube-cpu";
  std::string run_dir;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? preset_config("desk") : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.agent) cfg.agent = *o.agent;
  if (o.deterministic) cfg.train.sync_mode = SyncMode::DeterministicRoundRobin;
  if (o.resume) cfg.resume = true;
  if (o.out) {
    cfg.output_dir = fs::absolute(*o.out);
    cfg.calibration_file.reset();
  }
  if (o.beta) cfg.betas = {*o.beta};
  if (o.workers) cfg.worker_counts = {*o.workers};
  if (!o.bands.empty()) cfg.eval_bands = o.bands;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serverless autoscaling laboratory: simulator, RL agents and baselines"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI experiment config (default: desk preset)");
    sub->add_option("--seed", o.seed, "Base seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--deterministic", o.deterministic, "Round-robin workers on one thread");
  };

  auto* calibrate = app.add_subcommand("calibrate", "Derive reward normalization bounds");
  add_common(calibrate);
  calibrate->add_option("--band", o.bands, "Bands to sample (repeatable)");

  auto* train = app.add_subcommand("train", "Train one agent");
  add_common(train);
  train->add_option("--beta", o.beta, "Objective blend in [0, 1]");
  train->add_option("--workers", o.workers, "Parallel actor-learners");
  train->add_option("--agent", o.agent, "a3c or dqn")->check(CLI::IsMember({"a3c", "dqn"}));
  train->add_flag("--resume", o.resume, "Continue from an existing checkpoint");

  auto* sweep = app.add_subcommand("train-sweep", "Train every (beta, workers) combination");
  add_common(sweep);
  sweep->add_option("--beta", o.beta, "Restrict to one beta");
  sweep->add_option("--workers", o.workers, "Restrict to one worker count");
  sweep->add_option("--agent", o.agent, "a3c or dqn")->check(CLI::IsMember({"a3c", "dqn"}));
  sweep->add_flag("--resume", o.resume, "Continue from existing checkpoints");

  auto* evaluate = app.add_subcommand("evaluate", "Compare checkpoints and baselines per band");
  add_common(evaluate);
  evaluate->add_option("--target", o.targets,
                       "knative, kube-cpu, openfaas, or a checkpoint file/run directory (repeatable)")
      ->required();
  evaluate->add_option("--band", o.bands, "Bands to evaluate (repeatable)");

  auto* report = app.add_subcommand("report", "Export long-format plot data from a run directory");
  report->add_option("run_dir", o.run_dir, "Run directory")->required();

  auto* simulate = app.add_subcommand("simulate", "Run one baseline episode with the event log");
  add_common(simulate);
  simulate->add_option("--baseline", o.baseline, "knative, kube-cpu or openfaas")
      ->check(CLI::IsMember({"knative", "kube-cpu", "openfaas"}));
  simulate->add_option("--band", o.bands, "Load band (default mid)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (report->parsed()) {
      cmd_report(o.run_dir, std::cout);
      return 0;
    }
    const ExperimentConfig cfg = resolve_config(o);
    if (calibrate->parsed()) {
      cmd_calibrate(cfg, std::cout);
    } else if (train->parsed()) {
      cmd_train(cfg, o.beta.value_or(cfg.train.beta), o.workers.value_or(cfg.train.workers), std::cout);
    } else if (sweep->parsed()) {
      cmd_train_sweep(cfg, std::cout);
    } else if (evaluate->parsed()) {
      std::vector<EvalTarget> targets;
      for (const auto& t : o.targets) targets.push_back(parse_target(t, cfg));
      cmd_evaluate(cfg, targets, cfg.eval_bands, std::cout);
    } else if (simulate->parsed()) {
      cmd_simulate(cfg, baseline_by_name(o.baseline), o.bands.empty() ? "mid" : o.bands.front(), std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TraceParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
