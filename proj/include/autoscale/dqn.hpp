#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "autoscale/agents.hpp"

namespace autoscale {

/// Coarse grid used by the value learner: four points per dimension, taken
/// from the 11-level grid.
inline constexpr std::array<int, 4> kDqnGrid{0, 3, 7, 10};
inline constexpr int kDqnActions = 64;

/// Compound index c = g1*16 + g2*4 + g3 with each g in [0, 4).
std::array<int, 3> decode_compound(int c);
int encode_compound(const std::array<int, 3>& g);
ScalingAction compound_to_action(int c);

/// Argmax; the lowest index wins ties.
int greedy_compound(const std::vector<double>& q);

struct DqnConfig {
  int episodes = 300;
  double gamma = 0.6;
  double lr = 1e-4;
  int replay_capacity = 10000;
  int batch_size = 32;
  int target_refresh = 200;  // gradient updates between target copies
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.5;  // of all training steps
  double beta = 0.5;
  std::uint64_t seed = 1;
  std::vector<int> hidden{150, 150};

  void validate() const;
  double epsilon(long long step, long long total_steps) const;
};

struct DqnTransition {
  std::vector<double> s;
  int action = 0;
  double r = 0.0;
  std::vector<double> s_next;
  bool terminal = false;
};

/// Fixed-capacity ring buffer; the oldest entry is overwritten when full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(DqnTransition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const DqnTransition& at(std::size_t i) const { return items_.at(i); }
  /// Uniform draw with replacement.
  std::vector<const DqnTransition*> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<DqnTransition> items_;
};

struct DqnResult {
  std::unique_ptr<nn::ParameterStore> q;
  std::vector<EpisodeStats> curve;
  std::uint64_t updates = 0;
};

DqnResult train_dqn(const EnvBlueprint& blueprint, const std::vector<WorkloadSpec>& pool,
                    const DqnConfig& config, const nn::Checkpoint* resume = nullptr,
                    const EpisodeCallback& on_episode = {});

nn::Checkpoint make_dqn_checkpoint(const DqnResult& result, const std::string& metadata);

StepPolicy greedy_q_policy(nn::NetworkSpec spec, nn::Params params);

}  // namespace autoscale
