#include "autoscale/dqn.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/core.h>

namespace autoscale {

std::array<int, 3> decode_compound(int c) {
  if (c < 0 || c >= kDqnActions) throw std::out_of_range(fmt::format("compound action {} outside [0, 64)", c));
  return {c / 16, (c / 4) % 4, c % 4};
}

int encode_compound(const std::array<int, 3>& g) {
  for (int v : g) {
    if (v < 0 || v > 3) throw std::out_of_range("grid index outside [0, 4)");
  }
  return g[0] * 16 + g[1] * 4 + g[2];
}

ScalingAction compound_to_action(int c) {
  const auto g = decode_compound(c);
  return {kDqnGrid[g[0]], kDqnGrid[g[1]], kDqnGrid[g[2]]};
}

int greedy_compound(const std::vector<double>& q) {
  if (q.empty()) throw std::invalid_argument("empty value vector");
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

void DqnConfig::validate() const {
  if (episodes < 1) throw ConfigError("dqn: episodes must be >= 1");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("dqn: gamma must lie in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("dqn: learning rate must be positive");
  if (replay_capacity < 1 || batch_size < 1) throw ConfigError("dqn: replay capacity and batch size must be >= 1");
  if (target_refresh < 1) throw ConfigError("dqn: target_refresh must be >= 1");
  if (eps_end < 0.0 || eps_start > 1.0 || eps_end > eps_start) throw ConfigError("dqn: need 0 <= eps_end <= eps_start <= 1");
  if (!(eps_decay_fraction > 0.0)) throw ConfigError("dqn: eps_decay_fraction must be positive");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("dqn: beta must lie in [0, 1]");
}

double DqnConfig::epsilon(long long step, long long total_steps) const {
  const double horizon = eps_decay_fraction * static_cast<double>(total_steps);
  if (horizon <= 0.0) return eps_end;
  const double frac = std::min(1.0, static_cast<double>(step) / horizon);
  return eps_start + (eps_end - eps_start) * frac;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(DqnTransition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const DqnTransition*> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const DqnTransition*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[pick(rng)]);
  return out;
}

DqnResult train_dqn(const EnvBlueprint& blueprint, const std::vector<WorkloadSpec>& pool,
                    const DqnConfig& config, const nn::Checkpoint* resume,
                    const EpisodeCallback& on_episode) {
  config.validate();
  if (pool.empty()) throw ConfigError("train: workload pool is empty");
  if (!blueprint.calibration) {
    throw CalibrationError("reward bounds are not calibrated; run the `calibrate` command first");
  }
  nn::NetworkSpec spec{blueprint.state_dim(), config.hidden, {kDqnActions}, config.seed};
  nn::AdamConfig adam;
  adam.lr = config.lr;
  DqnResult result;
  result.q = std::make_unique<nn::ParameterStore>(spec, adam);
  if (resume) {
    const auto& e = resume->at("q");
    if (!(e.spec == spec)) throw nn::ShapeError("checkpoint network 'q' does not match the configured shape");
    result.q->restore(e.params, e.adam, e.version);
  }

  ServerlessEnv env = blueprint.make(config.beta);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  ReplayBuffer replay(static_cast<std::size_t>(config.replay_capacity));
  nn::Params online = result.q->snapshot();
  nn::Params target = online;
  const long long total_steps =
      static_cast<long long>(config.episodes) * blueprint.env.steps_per_episode();
  long long step = 0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(0, kDqnActions - 1);
  nn::ForwardCache cache;

  for (int ep = 0; ep < config.episodes; ++ep) {
    const auto& workload = pool[order[static_cast<std::size_t>(ep) % order.size()]];
    auto state = env.reset(workload, config.seed * 1000003ull + static_cast<std::uint64_t>(ep));
    while (!env.done()) {
      const double eps = config.epsilon(step, total_steps);
      int c = 0;
      if (unit(rng) < eps) {
        c = any_action(rng);
      } else {
        c = greedy_compound(nn::forward(spec, online, state));
      }
      auto res = env.step(compound_to_action(c));
      replay.push({state, c, res.reward, res.state, res.done});
      state = std::move(res.state);
      ++step;

      if (replay.size() < static_cast<std::size_t>(config.batch_size)) continue;
      const auto batch = replay.sample(static_cast<std::size_t>(config.batch_size), rng);
      nn::Params grad(online.size(), 0.0);
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (const auto* tr : batch) {
        double y = tr->r;
        if (!tr->terminal) {
          const auto qn = nn::forward(spec, target, tr->s_next);
          y += config.gamma * *std::max_element(qn.begin(), qn.end());
        }
        const auto q = nn::forward(spec, online, tr->s, &cache);
        std::vector<double> g(q.size(), 0.0);
        g[static_cast<std::size_t>(tr->action)] = -2.0 * (y - q[static_cast<std::size_t>(tr->action)]) * scale;
        nn::backward(spec, online, cache, g, grad);
      }
      result.q->apply(grad);
      online = result.q->snapshot();
      ++result.updates;
      if (result.updates % static_cast<std::uint64_t>(config.target_refresh) == 0) target = online;
    }
    const auto s = env.summary();
    EpisodeStats st{ep, 0, s.reward_sum, s.mean_rfrt, s.rfr, s.cost, s.rart, s.clamped_steps, result.updates};
    result.curve.push_back(st);
    if (on_episode) on_episode(st);
  }
  return result;
}

nn::Checkpoint make_dqn_checkpoint(const DqnResult& result, const std::string& metadata) {
  nn::Checkpoint ckpt;
  ckpt.metadata = metadata;
  ckpt.entries.push_back(nn::to_entry("q", *result.q));
  return ckpt;
}

StepPolicy greedy_q_policy(nn::NetworkSpec spec, nn::Params params) {
  return [spec = std::move(spec), params = std::move(params)](ServerlessEnv& env,
                                                              const std::vector<double>& state) {
    return env.step(compound_to_action(greedy_compound(nn::forward(spec, params, state))));
  };
}

}  // namespace autoscale
