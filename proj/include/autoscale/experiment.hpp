#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "autoscale/agents.hpp"
#include "autoscale/baselines.hpp"
#include "autoscale/dqn.hpp"

namespace autoscale {

inline constexpr const char* kCodeVersion = "0.1.0";

struct ExperimentConfig {
  std::string preset = "desk";
  std::filesystem::path base_dir = ".";  // relative file paths resolve here

  std::optional<std::filesystem::path> cluster_file;
  std::optional<std::filesystem::path> profiles_file;
  std::optional<std::filesystem::path> applications_file;
  std::optional<std::filesystem::path> traces_file;
  std::filesystem::path output_dir = "runs/desk";
  std::optional<std::filesystem::path> calibration_file;  // default: <output_dir>/calibration.json

  std::vector<double> betas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> worker_counts{3};
  std::vector<AppId> applications;  // deployed set; empty = every application
  int apps_per_workload = 4;
  int train_workloads = 20;
  int workloads_per_band = 10;
  int calibration_workloads = 20;
  std::vector<std::string> eval_bands{"low", "mid", "high"};
  std::uint64_t seed = 1;
  int synthetic_traces = 200;
  int synthetic_trace_minutes = 1440;
  ArrivalModel arrival_model = ArrivalModel::Uniform;
  std::string agent = "a3c";
  bool resume = false;

  EnvConfig env;
  TrainConfig train;
  DqnConfig dqn;
  BaselinePolicyConfig baselines;

  void validate() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path calibration_path() const;
  bool deterministic() const { return train.sync_mode == SyncMode::DeterministicRoundRobin; }
};

/// Defaults of the named preset ("desk" or "paper").
ExperimentConfig preset_config(const std::string& name);

/// Reads an INI file with sections [experiment], [env], [train], [dqn] and
/// [baselines]. The [experiment] `preset` key selects the defaults; every
/// other key overrides one field. Unknown keys are errors.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                              const std::string& source = "<config>");

/// Canonical key=value dump of every field; the config hash is taken over it.
std::string canonical_config(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(const std::string& text);
std::string config_hash(const ExperimentConfig& cfg);

/// Cluster, profiles, deployed applications and trace pool of an experiment.
struct Resources {
  std::vector<VmSpec> vms;
  std::vector<FunctionProfile> profiles;
  std::vector<Application> applications;
  std::vector<TraceSeries> traces;
};

Resources load_resources(const ExperimentConfig& cfg);

enum class WorkloadPurpose { Calibration = 1, Training = 2, Evaluation = 3 };

/// Seeded workload set; each purpose draws from a disjoint seed range so
/// evaluation workloads are held out from training.
std::vector<WorkloadSpec> make_workload_set(const ExperimentConfig& cfg, const Resources& res,
                                            const RateBand& band, int count, WorkloadPurpose purpose);

EnvBlueprint make_blueprint(const ExperimentConfig& cfg, const Resources& res,
                            std::optional<Calibration> calibration);

/// Metadata lines written at the top of every CSV, each starting with '#'.
/// The timestamp is on its own line so comparisons can skip it.
std::string metadata_header(const ExperimentConfig& cfg, const std::string& mode);
bool is_timestamp_line(const std::string& line);

// Commands. Each writes its artifacts under cfg.output_dir and reports
// progress on `log`.

Calibration cmd_calibrate(const ExperimentConfig& cfg, std::ostream& log);

struct TrainRun {
  std::string tag;  // e.g. a3c_b0.50_w3
  std::filesystem::path dir;
  std::filesystem::path checkpoint;
  std::filesystem::path curve;
  double clamp_rate = 0.0;  // fraction of steps with a clamped reward channel
};

std::string run_tag(const std::string& agent, double beta, int workers);
TrainRun cmd_train(const ExperimentConfig& cfg, double beta, int workers, std::ostream& log);
std::vector<TrainRun> cmd_train_sweep(const ExperimentConfig& cfg, std::ostream& log);

/// A policy to evaluate: a baseline name or a checkpoint file.
struct EvalTarget {
  std::string name;
  std::optional<BaselineKind> baseline;
  std::optional<std::filesystem::path> checkpoint;
};

/// Relative checkpoint paths are tried as given, then under the output
/// directory, then under the config directory.
EvalTarget parse_target(const std::string& spec, const ExperimentConfig& cfg);

struct EvalRow {
  std::string target;
  std::string band;
  int workloads = 0;
  double rart = 0.0;
  double rfr = 0.0;
  double cost = 0.0;
  int undefined_rart = 0;  // workloads with no completed application request
};

struct EvalResult {
  std::vector<EvalRow> rows;  // targets x bands, in target order then band order
  std::filesystem::path summary_csv;
  std::filesystem::path episodes_csv;
  std::filesystem::path improvements_csv;
};

EvalResult cmd_evaluate(const ExperimentConfig& cfg, const std::vector<EvalTarget>& targets,
                        const std::vector<std::string>& bands, std::ostream& log);

/// Merges curves and evaluation tables under `run_dir` into long-format CSVs.
std::vector<std::filesystem::path> cmd_report(const std::filesystem::path& run_dir, std::ostream& log);

/// One baseline episode with the full event log.
struct SimulateResult {
  EpisodeSummary summary;
  std::filesystem::path log_file;
  std::filesystem::path metrics_file;
};

SimulateResult cmd_simulate(const ExperimentConfig& cfg, BaselineKind kind, const std::string& band,
                            std::ostream& log);

/// Per-workload metrics, merged by workload index.
std::vector<EpisodeSummary> evaluate_policy(const EnvBlueprint& blueprint,
                                            const std::vector<WorkloadSpec>& workloads,
                                            const std::function<StepPolicy()>& make_policy,
                                            std::uint64_t seed, int threads);

}  // namespace autoscale
