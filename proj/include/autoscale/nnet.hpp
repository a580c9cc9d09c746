#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace autoscale::nn {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense network: input -> hidden (ReLU) ... -> linear output. The output is
/// split into `heads` for a policy network; a value network has one head of 1.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden{150, 150};
  std::vector<int> heads{1};
  std::uint64_t seed = 0;

  int output_dim() const;
  std::vector<int> layer_sizes() const;  // input, hidden..., output
  std::size_t param_count() const;
  void validate() const;

  static NetworkSpec actor(int input_dim, int levels = 11, std::uint64_t seed = 0);
  static NetworkSpec critic(int input_dim, std::uint64_t seed = 0);
  bool operator==(const NetworkSpec& o) const {
    return input_dim == o.input_dim && hidden == o.hidden && heads == o.heads;
  }
};

using Params = std::vector<double>;

/// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
Params init_params(const NetworkSpec& spec);

/// Activations kept by forward() for backpropagation.
struct ForwardCache {
  std::vector<std::vector<double>> activations;  // input, post-ReLU hidden..., raw output
};

std::vector<double> forward(const NetworkSpec& spec, const Params& params,
                            const std::vector<double>& x, ForwardCache* cache = nullptr);

/// Accumulates d(output . grad_out)/d(params) into `grad`.
void backward(const NetworkSpec& spec, const Params& params, const ForwardCache& cache,
              const std::vector<double>& grad_out, Params& grad);

// Policy heads.
using HeadProbs = std::vector<std::vector<double>>;

HeadProbs softmax_heads(const NetworkSpec& spec, const std::vector<double>& logits);
HeadProbs forward_actor(const NetworkSpec& spec, const Params& params, const std::vector<double>& state);
double forward_critic(const NetworkSpec& spec, const Params& params, const std::vector<double>& state);
double entropy(const std::vector<double>& p);
double log_joint_probability(const HeadProbs& probs, const std::vector<int>& action);

inline constexpr double kProbFloor = 1e-8;

struct ActorSample {
  std::vector<double> state;
  std::vector<int> action;  // one index per head
  double advantage = 0.0;
};

struct CriticSample {
  std::vector<double> state;
  double target = 0.0;
};

/// Ascent direction of mean_t [log pi(a_t|s_t) * A_t + entropy_coef * H(pi(s_t))].
Params actor_gradient(const NetworkSpec& spec, const Params& params,
                      const std::vector<ActorSample>& batch, double entropy_coef);
/// The objective actor_gradient differentiates.
double actor_objective(const NetworkSpec& spec, const Params& params,
                       const std::vector<ActorSample>& batch, double entropy_coef);

/// Descent direction of mean_t (target_t - V(s_t))^2.
Params critic_gradient(const NetworkSpec& spec, const Params& params,
                       const std::vector<CriticSample>& batch);
double critic_loss(const NetworkSpec& spec, const Params& params,
                   const std::vector<CriticSample>& batch);

/// Rescales `grad` in place so its L2 norm is at most max_norm.
void clip_norm(Params& grad, double max_norm);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Params m;
  Params v;
  std::uint64_t t = 0;
};

/// One Adam descent step: params -= lr * mhat / (sqrt(vhat) + eps).
void adam_step(const AdamConfig& cfg, AdamState& state, Params& params, const Params& grad);

/// Shared parameters guarded by a mutex. snapshot() and apply() are atomic
/// with respect to each other; version increments once per apply().
class ParameterStore {
 public:
  ParameterStore(NetworkSpec spec, AdamConfig adam);
  ParameterStore(NetworkSpec spec, AdamConfig adam, Params params);

  const NetworkSpec& spec() const { return spec_; }
  const AdamConfig& adam_config() const { return adam_; }
  Params snapshot() const;
  Params snapshot(std::uint64_t& version) const;
  /// `descent_grad` points uphill of the loss; returns the new version.
  std::uint64_t apply(const Params& descent_grad);
  void set_params(Params params);
  std::uint64_t version() const;

  AdamState optimizer_state() const;
  void restore(Params params, AdamState state, std::uint64_t version);

 private:
  NetworkSpec spec_;
  AdamConfig adam_;
  mutable std::mutex mu_;
  Params params_;
  AdamState state_;
  std::uint64_t version_ = 0;
};

/// One named network inside a checkpoint file.
struct CheckpointEntry {
  std::string name;
  NetworkSpec spec;
  std::uint64_t version = 0;
  Params params;
  AdamState adam;
};

struct Checkpoint {
  std::string metadata;  // free-form, e.g. JSON run info
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry& at(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

CheckpointEntry to_entry(const std::string& name, const ParameterStore& store);

}  // namespace autoscale::nn
