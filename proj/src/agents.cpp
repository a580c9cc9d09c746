#include "autoscale/agents.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include <fmt/core.h>

namespace autoscale {

void TrainConfig::validate() const {
  if (workers < 1) throw ConfigError("train: workers must be >= 1");
  if (episodes < 1) throw ConfigError("train: episodes must be >= 1");
  if (update_interval < 1) throw ConfigError("train: update_interval must be >= 1");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("train: gamma must lie in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (entropy_coef < 0.0) throw ConfigError("train: entropy_coef must be non-negative");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("train: beta must lie in [0, 1]");
  if (max_grad_norm < 0.0) throw ConfigError("train: max_grad_norm must be non-negative");
}

WorkerError::WorkerError(int worker, const std::string& what)
    : std::runtime_error(fmt::format("worker {}: {}", worker, what)), worker_(worker) {}

ServerlessEnv EnvBlueprint::make(double beta) const {
  EnvConfig cfg = env;
  cfg.beta = beta;
  return ServerlessEnv(vms, profiles, cfg, calibration);
}

AdvantageBatch compute_advantages(const std::vector<Transition>& segment,
                                  const nn::NetworkSpec& critic, const nn::Params& critic_params,
                                  double gamma) {
  if (segment.empty()) throw std::invalid_argument("advantage segment is empty");
  AdvantageBatch out;
  for (const auto& tr : segment) {
    const double v = nn::forward_critic(critic, critic_params, tr.s);
    const double v_next = tr.terminal ? 0.0 : nn::forward_critic(critic, critic_params, tr.s_next);
    const double target = tr.r + gamma * v_next;
    out.target.push_back(target);
    out.advantage.push_back(target - v);
  }
  return out;
}

ScalingAction select_from_probs(const nn::HeadProbs& probs, SelectMode mode, std::mt19937_64& rng) {
  if (probs.size() != 3) throw nn::ShapeError("policy must have three heads");
  int idx[3];
  for (std::size_t h = 0; h < 3; ++h) {
    const auto& p = probs[h];
    if (mode == SelectMode::Greedy) {
      idx[h] = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    } else {
      std::discrete_distribution<int> d(p.begin(), p.end());
      idx[h] = d(rng);
    }
  }
  return {idx[0], idx[1], idx[2]};
}

ScalingAction select_action(const nn::NetworkSpec& actor, const nn::Params& params,
                            const std::vector<double>& state, SelectMode mode,
                            std::mt19937_64& rng) {
  return select_from_probs(nn::forward_actor(actor, params, state), mode, rng);
}

namespace {

struct Shared {
  nn::ParameterStore* actor;
  nn::ParameterStore* critic;
  const TrainConfig* config;
  const std::vector<WorkloadSpec>* pool;
  std::mutex stats_mu;
  std::vector<EpisodeStats> stats;
  const EpisodeCallback* on_episode;
};

/// Step-wise worker so the same code runs threaded or interleaved.
class Worker {
 public:
  Worker(int id, Shared& shared, const EnvBlueprint& blueprint)
      : id_(id),
        shared_(shared),
        env_(blueprint.make(shared.config->beta)),
        rng_(shared.config->seed + static_cast<std::uint64_t>(id)) {
    order_.resize(shared.pool->size());
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
    actor_ = shared.actor->snapshot();
    critic_ = shared.critic->snapshot();
  }

  bool finished() const { return episode_ >= shared_.config->episodes; }
  std::uint64_t updates() const { return updates_; }

  /// Performs one environment step (resetting first if needed).
  void step() {
    const auto& cfg = *shared_.config;
    if (!in_episode_) {
      const auto& workload = (*shared_.pool)[order_[static_cast<std::size_t>(episode_) % order_.size()]];
      const std::uint64_t env_seed =
          (cfg.seed + static_cast<std::uint64_t>(id_)) * 1000003ull + static_cast<std::uint64_t>(episode_);
      state_ = env_.reset(workload, env_seed);
      t_ = 0;
      memory_.clear();
      in_episode_ = true;
    }
    const ScalingAction a =
        select_action(shared_.actor->spec(), actor_, state_, SelectMode::Sample, rng_);
    StepResult res = env_.step(a);
    memory_.push_back(Transition{state_, a, res.reward, res.state, res.done});
    if ((t_ + 1) % cfg.update_interval == 0 || res.done) update();
    ++t_;
    state_ = std::move(res.state);
    if (res.done) finish_episode();
  }

 private:
  void update() {
    const auto& cfg = *shared_.config;
    const auto& aspec = shared_.actor->spec();
    const auto& cspec = shared_.critic->spec();
    const auto adv = compute_advantages(memory_, cspec, critic_, cfg.gamma);
    std::vector<nn::ActorSample> actor_batch;
    std::vector<nn::CriticSample> critic_batch;
    for (std::size_t i = 0; i < memory_.size(); ++i) {
      const auto& tr = memory_[i];
      actor_batch.push_back({tr.s, {tr.a.a1, tr.a.a2, tr.a.a3}, adv.advantage[i]});
      critic_batch.push_back({tr.s, adv.target[i]});
    }
    nn::Params g_actor = nn::actor_gradient(aspec, actor_, actor_batch, cfg.entropy_coef);
    for (double& g : g_actor) g = -g;  // ascent -> descent
    nn::Params g_critic = nn::critic_gradient(cspec, critic_, critic_batch);
    if (cfg.max_grad_norm > 0.0) {
      nn::clip_norm(g_actor, cfg.max_grad_norm);
      nn::clip_norm(g_critic, cfg.max_grad_norm);
    }
    shared_.actor->apply(g_actor);
    shared_.critic->apply(g_critic);
    actor_ = shared_.actor->snapshot();
    critic_ = shared_.critic->snapshot();
    memory_.clear();
    ++updates_;
  }

  void finish_episode() {
    const auto s = env_.summary();
    EpisodeStats st;
    st.episode = episode_;
    st.worker = id_;
    st.reward = s.reward_sum;
    st.rfrt = s.mean_rfrt;
    st.rfr = s.rfr;
    st.cost = s.cost;
    st.rart = s.rart;
    st.clamped_steps = s.clamped_steps;
    st.updates = updates_;
    {
      std::lock_guard lock(shared_.stats_mu);
      shared_.stats.push_back(st);
      if (*shared_.on_episode) (*shared_.on_episode)(st);
    }
    ++episode_;
    in_episode_ = false;
  }

  int id_;
  Shared& shared_;
  ServerlessEnv env_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  nn::Params actor_;
  nn::Params critic_;
  std::vector<Transition> memory_;
  std::vector<double> state_;
  int episode_ = 0;
  int t_ = 0;
  bool in_episode_ = false;
  std::uint64_t updates_ = 0;
};

void restore_store(nn::ParameterStore& store, const nn::CheckpointEntry& e) {
  if (!(e.spec == store.spec())) {
    throw nn::ShapeError(fmt::format("checkpoint network '{}' does not match the configured shape", e.name));
  }
  store.restore(e.params, e.adam, e.version);
}

}  // namespace

TrainResult train_a3c(const EnvBlueprint& blueprint, const std::vector<WorkloadSpec>& pool,
                      const TrainConfig& config, const nn::Checkpoint* resume,
                      const EpisodeCallback& on_episode) {
  config.validate();
  if (pool.empty()) throw ConfigError("train: workload pool is empty");
  if (!blueprint.calibration) {
    throw CalibrationError("reward bounds are not calibrated; run the `calibrate` command first");
  }
  const int dim = blueprint.state_dim();
  nn::AdamConfig adam;
  adam.lr = config.lr;
  nn::NetworkSpec aspec = nn::NetworkSpec::actor(dim, blueprint.env.action_levels, config.seed);
  aspec.hidden = config.hidden;
  nn::NetworkSpec cspec = nn::NetworkSpec::critic(dim, config.seed + 7919);
  cspec.hidden = config.hidden;

  TrainResult result;
  result.actor = std::make_unique<nn::ParameterStore>(aspec, adam);
  result.critic = std::make_unique<nn::ParameterStore>(cspec, adam);
  if (resume) {
    restore_store(*result.actor, resume->at("actor"));
    restore_store(*result.critic, resume->at("critic"));
  }

  Shared shared{result.actor.get(), result.critic.get(), &config, &pool, {}, {}, &on_episode};
  std::vector<std::unique_ptr<Worker>> workers;
  for (int w = 0; w < config.workers; ++w) workers.push_back(std::make_unique<Worker>(w, shared, blueprint));

  auto guarded_step = [](Worker& worker, int id) {
    try {
      worker.step();
    } catch (const WorkerError&) {
      throw;
    } catch (const std::exception& e) {
      throw WorkerError(id, e.what());
    }
  };

  if (config.sync_mode == SyncMode::DeterministicRoundRobin) {
    bool active = true;
    while (active) {
      active = false;
      for (int w = 0; w < config.workers; ++w) {
        if (workers[w]->finished()) continue;
        guarded_step(*workers[w], w);
        active = true;
      }
    }
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.workers));
    std::vector<std::thread> threads;
    for (int w = 0; w < config.workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          while (!workers[w]->finished()) guarded_step(*workers[w], w);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (const auto& w : workers) result.worker_updates.push_back(w->updates());
  result.curve = std::move(shared.stats);
  std::sort(result.curve.begin(), result.curve.end(), [](const EpisodeStats& a, const EpisodeStats& b) {
    return a.episode != b.episode ? a.episode < b.episode : a.worker < b.worker;
  });
  return result;
}

nn::Checkpoint make_a3c_checkpoint(const TrainResult& result, const std::string& metadata) {
  nn::Checkpoint ckpt;
  ckpt.metadata = metadata;
  ckpt.entries.push_back(nn::to_entry("actor", *result.actor));
  ckpt.entries.push_back(nn::to_entry("critic", *result.critic));
  return ckpt;
}

StepPolicy greedy_actor_policy(nn::NetworkSpec spec, nn::Params params) {
  return [spec = std::move(spec), params = std::move(params)](ServerlessEnv& env,
                                                              const std::vector<double>& state) {
    std::mt19937_64 unused(0);
    return env.step(select_action(spec, params, state, SelectMode::Greedy, unused));
  };
}

EpisodeSummary run_episode(ServerlessEnv& env, const WorkloadSpec& workload, std::uint64_t seed,
                           const StepPolicy& policy) {
  auto state = env.reset(workload, seed);
  while (!env.done()) state = policy(env, state).state;
  return env.summary();
}

void check_compatible(const nn::CheckpointEntry& entry, int state_dim, int output_dim) {
  if (entry.spec.input_dim != state_dim) {
    throw nn::ShapeError(fmt::format("checkpoint network '{}' expects {} state features, environment has {}",
                                     entry.name, entry.spec.input_dim, state_dim));
  }
  if (entry.spec.output_dim() != output_dim) {
    throw nn::ShapeError(fmt::format("checkpoint network '{}' has {} outputs, expected {}",
                                     entry.name, entry.spec.output_dim(), output_dim));
  }
}

}  // namespace autoscale
