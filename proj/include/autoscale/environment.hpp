#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "autoscale/cluster.hpp"
#include "autoscale/metrics.hpp"
#include "autoscale/simulator.hpp"
#include "autoscale/workload.hpp"

namespace autoscale {

/// Three grid indices: target utilization, cpu delta, memory delta.
struct ScalingAction {
  int a1 = 0;
  int a2 = 0;
  int a3 = 0;

  bool operator==(const ScalingAction&) const = default;
};

struct DecodedAction {
  double target_util = 0.5;
  double cpu_delta = 0.0;  // vCPU
  double mem_delta = 0.0;  // MB
};

enum class TargetMode {
  RandomUniform,  // training
  HighestRfrt,    // evaluation; ties go to the lowest function id
};

struct EnvConfig {
  double decision_interval = 10.0;
  double observe_delay = 10.0;
  double episode_duration = 300.0;
  double beta = 0.5;
  TargetMode target_mode = TargetMode::RandomUniform;
  int initial_replicas = 1;  // warm pods per deployed function at reset
  int action_levels = 11;    // K for every dimension
  double min_target_util = 0.10;
  double max_cpu_step = 0.25;   // vCPU at the grid's extreme
  double max_mem_step = 256.0;  // MB at the grid's extreme
  // Feature scaling caps.
  double rate_cap = 60.0;
  double rfrt_cap = 20.0;
  SimConfig sim;

  int steps_per_episode() const;
  void validate() const;
};

struct StepRecord {
  double time = 0.0;
  FunctionId target = 0;
  ScalingAction action;
  DecodedAction decoded;
  VerticalDelta clamped;
  int n_delta = 0;
  RewardSignals signals;
  double reward = 0.0;
};

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool done = false;
  StepRecord record;
};

struct EpisodeSummary {
  double rart = 0.0;  // NaN when no application request completed
  double rfr = 0.0;
  double cost = 0.0;
  double mean_rfrt = 1.0;
  double reward_sum = 0.0;
  int steps = 0;
  long long requests = 0;
  long long drops = 0;
  int clamped_steps = 0;  // steps with a reward channel outside its calibrated range
};

/// Episodic decision process over the simulator. Each step scales one target
/// function (vertical, then horizontal), waits `observe_delay` to score the
/// action, and runs to the next decision tick.
class ServerlessEnv {
 public:
  ServerlessEnv(std::vector<VmSpec> vms, std::vector<FunctionProfile> profiles, EnvConfig config,
                std::optional<Calibration> calibration = std::nullopt);

  std::vector<double> reset(const WorkloadSpec& workload, std::uint64_t seed);
  StepResult step(const ScalingAction& action);

  /// Rule-based control: `controller` acts on the simulator at the decision
  /// tick in place of an action. Reward is 0 when uncalibrated.
  using Controller = std::function<void(Simulator&)>;
  StepResult step_with(const Controller& controller);

  DecodedAction decode(const ScalingAction& action) const;
  std::vector<double> observe() const;

  std::size_t state_dim() const { return 7 * vms_.size() + 9; }
  bool done() const { return done_; }
  int steps_taken() const { return steps_; }
  FunctionId target() const { return target_; }
  const EnvConfig& config() const { return config_; }
  void set_beta(double beta) { config_.beta = beta; }
  void set_target_mode(TargetMode mode) { config_.target_mode = mode; }
  const std::optional<Calibration>& calibration() const { return calibration_; }
  void set_calibration(std::optional<Calibration> c) { calibration_ = std::move(c); }

  const Simulator& sim() const { return *sim_; }
  Simulator& sim() { return *sim_; }
  const std::vector<StepRecord>& trace() const { return trace_; }
  EpisodeSummary summary() const;

 private:
  StepResult finish_step(StepRecord record);
  void select_target();
  void require_active() const;

  std::vector<VmSpec> vms_;
  std::vector<FunctionProfile> profiles_;
  EnvConfig config_;
  std::optional<Calibration> calibration_;
  std::optional<Simulator> sim_;
  std::vector<FunctionId> functions_;
  std::mt19937_64 rng_;
  FunctionId target_ = 0;
  int steps_ = 0;
  bool done_ = true;
  double reward_sum_ = 0.0;
  int clamped_steps_ = 0;
  double fleet_cpu_max_ = 1.0;
  double fleet_mem_max_ = 1.0;
  std::vector<StepRecord> trace_;
};

/// Tab-separated per-step trace for debugging.
std::string format_trace(const std::vector<StepRecord>& trace);

}  // namespace autoscale
