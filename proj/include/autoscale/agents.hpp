#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "autoscale/environment.hpp"
#include "autoscale/nnet.hpp"

namespace autoscale {

enum class SyncMode {
  Asynchronous,            // one thread per worker
  DeterministicRoundRobin, // workers interleaved one step at a time on the caller's thread
};

enum class SelectMode { Sample, Greedy };

struct TrainConfig {
  int workers = 3;
  int episodes = 300;  // per worker
  double gamma = 0.6;
  double lr = 1e-4;
  int update_interval = 30;  // f
  double entropy_coef = 0.01;
  double beta = 0.5;
  std::uint64_t seed = 1;
  SyncMode sync_mode = SyncMode::Asynchronous;
  double max_grad_norm = 0.0;  // 0 disables clipping
  std::vector<int> hidden{150, 150};

  void validate() const;
};

struct Transition {
  std::vector<double> s;
  ScalingAction a;
  double r = 0.0;
  std::vector<double> s_next;
  bool terminal = false;
};

struct AdvantageBatch {
  std::vector<double> advantage;
  std::vector<double> target;
};

/// One-step TD: A_t = r_t + gamma V(s_{t+1}) - V(s_t), with V(s_{t+1}) = 0 on
/// terminal transitions. The critic target is r_t + gamma V(s_{t+1}).
AdvantageBatch compute_advantages(const std::vector<Transition>& segment,
                                  const nn::NetworkSpec& critic, const nn::Params& critic_params,
                                  double gamma);

ScalingAction select_action(const nn::NetworkSpec& actor, const nn::Params& params,
                            const std::vector<double>& state, SelectMode mode,
                            std::mt19937_64& rng);
/// Index-wise choice from already computed head probabilities.
ScalingAction select_from_probs(const nn::HeadProbs& probs, SelectMode mode, std::mt19937_64& rng);

struct EpisodeStats {
  int episode = 0;
  int worker = 0;
  double reward = 0.0;
  double rfrt = 0.0;
  double rfr = 0.0;
  double cost = 0.0;
  double rart = 0.0;
  int clamped_steps = 0;
  std::uint64_t updates = 0;  // cumulative updates by this worker
};

class WorkerError : public std::runtime_error {
 public:
  WorkerError(int worker, const std::string& what);
  int worker() const { return worker_; }

 private:
  int worker_;
};

/// Everything needed to build per-worker environments.
struct EnvBlueprint {
  std::vector<VmSpec> vms;
  std::vector<FunctionProfile> profiles;
  EnvConfig env;
  std::optional<Calibration> calibration;

  ServerlessEnv make(double beta) const;
  int state_dim() const { return static_cast<int>(7 * vms.size() + 9); }
};

struct TrainResult {
  std::unique_ptr<nn::ParameterStore> actor;
  std::unique_ptr<nn::ParameterStore> critic;
  std::vector<EpisodeStats> curve;  // sorted by (episode, worker)
  std::vector<std::uint64_t> worker_updates;
};

/// Progress hook, called after every finished episode (possibly from worker threads).
using EpisodeCallback = std::function<void(const EpisodeStats&)>;

/// Multi-worker advantage actor-critic. Each worker owns an environment copy
/// and local parameters; the global stores are shared. `resume` continues from
/// a checkpoint holding "actor" and "critic" entries.
TrainResult train_a3c(const EnvBlueprint& blueprint, const std::vector<WorkloadSpec>& pool,
                      const TrainConfig& config, const nn::Checkpoint* resume = nullptr,
                      const EpisodeCallback& on_episode = {});

nn::Checkpoint make_a3c_checkpoint(const TrainResult& result, const std::string& metadata);

/// Acts on a running episode: returns the result of one env step.
using StepPolicy = std::function<StepResult(ServerlessEnv&, const std::vector<double>& state)>;

StepPolicy greedy_actor_policy(nn::NetworkSpec spec, nn::Params params);

/// Resets with `workload` and runs `policy` until the episode is done.
EpisodeSummary run_episode(ServerlessEnv& env, const WorkloadSpec& workload, std::uint64_t seed,
                           const StepPolicy& policy);

/// Throws ShapeError unless `entry` fits an environment with `state_dim` features.
void check_compatible(const nn::CheckpointEntry& entry, int state_dim, int output_dim);

}  // namespace autoscale
