#include "autoscale/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/core.h>

namespace autoscale {

int EnvConfig::steps_per_episode() const {
  return static_cast<int>(std::lround(episode_duration / decision_interval));
}

void EnvConfig::validate() const {
  if (!(decision_interval > 0.0) || !(observe_delay > 0.0) || !(episode_duration > 0.0)) {
    throw ConfigError("env: intervals and duration must be positive");
  }
  if (observe_delay > decision_interval) {
    throw ConfigError("env: observe_delay must not exceed decision_interval");
  }
  const double steps = episode_duration / decision_interval;
  if (std::abs(steps - std::round(steps)) > 1e-9) {
    throw ConfigError("env: episode_duration must be a multiple of decision_interval");
  }
  if (beta < 0.0 || beta > 1.0) throw ConfigError("env: beta must lie in [0, 1]");
  if (action_levels < 2) throw ConfigError("env: action grid needs at least two levels");
  if (!(min_target_util > 0.0) || min_target_util > sim.limits.max_target_util) {
    throw ConfigError("env: target utilization range is empty");
  }
  if (initial_replicas < 0) throw ConfigError("env: initial_replicas must be non-negative");
}

ServerlessEnv::ServerlessEnv(std::vector<VmSpec> vms, std::vector<FunctionProfile> profiles,
                             EnvConfig config, std::optional<Calibration> calibration)
    : vms_(std::move(vms)),
      profiles_(std::move(profiles)),
      config_(config),
      calibration_(std::move(calibration)) {
  config_.validate();
  if (vms_.empty()) throw ConfigError("env: cluster has no VMs");
  for (const auto& v : vms_) {
    fleet_cpu_max_ = std::max(fleet_cpu_max_, v.cpu_capacity);
    fleet_mem_max_ = std::max(fleet_mem_max_, v.mem_capacity);
  }
}

std::vector<double> ServerlessEnv::reset(const WorkloadSpec& workload, std::uint64_t seed) {
  ClusterSetup setup{vms_, profiles_, workload.applications};
  SimConfig sim_config = config_.sim;
  sim_config.seed = seed;
  sim_.emplace(std::move(setup), sim_config);
  for (const auto& a : synthesize(workload)) {
    if (a.time <= config_.episode_duration) sim_->schedule_arrival(a.time, a.app_id);
  }
  functions_ = sim_->setup().deployed_functions();
  if (functions_.empty()) throw ConfigError("env: workload deploys no functions");
  for (FunctionId fn : functions_) {
    for (int i = 0; i < config_.initial_replicas; ++i) sim_->create_pod(fn, /*warm=*/true);
  }
  rng_.seed(seed);
  steps_ = 0;
  done_ = false;
  reward_sum_ = 0.0;
  clamped_steps_ = 0;
  trace_.clear();
  select_target();
  return observe();
}

void ServerlessEnv::require_active() const {
  if (!sim_ || done_) throw std::logic_error("env: step called on a finished episode; call reset");
}

DecodedAction ServerlessEnv::decode(const ScalingAction& action) const {
  const int k = config_.action_levels;
  for (int idx : {action.a1, action.a2, action.a3}) {
    if (idx < 0 || idx >= k) {
      throw std::out_of_range(fmt::format("action index {} outside [0, {})", idx, k));
    }
  }
  auto grid = [k](int j) { return 2.0 * j / (k - 1) - 1.0; };
  const double lo = config_.min_target_util;
  const double hi = config_.sim.limits.max_target_util;
  DecodedAction d;
  d.target_util = lo + (grid(action.a1) + 1.0) * 0.5 * (hi - lo);
  d.cpu_delta = grid(action.a2) * config_.max_cpu_step;
  d.mem_delta = grid(action.a3) * config_.max_mem_step;
  return d;
}

StepResult ServerlessEnv::step(const ScalingAction& action) {
  require_active();
  if (!calibration_) {
    throw CalibrationError("reward bounds are not calibrated; run the `calibrate` command first");
  }
  StepRecord record;
  record.time = sim_->now();
  record.target = target_;
  record.action = action;
  record.decoded = decode(action);
  record.clamped =
      sim_->clamp_vertical(target_, record.decoded.cpu_delta, record.decoded.mem_delta);
  sim_->apply_vertical(target_, record.clamped);
  record.n_delta = sim_->horizontal_delta(target_, record.decoded.target_util);
  sim_->apply_horizontal(target_, record.n_delta);
  return finish_step(record);
}

StepResult ServerlessEnv::step_with(const Controller& controller) {
  require_active();
  StepRecord record;
  record.time = sim_->now();
  record.target = target_;
  controller(*sim_);
  return finish_step(record);
}

StepResult ServerlessEnv::finish_step(StepRecord record) {
  const double t0 = record.time;
  const double t_obs = t0 + config_.observe_delay;
  const double t_next = t0 + config_.decision_interval;
  sim_->schedule_marker(t_obs, EventKind::RewardObservation);
  sim_->advance(t_obs);

  RewardSignals s;
  double rfrt_sum = 0.0;
  double rfr_sum = 0.0;
  for (FunctionId fn : functions_) {
    const auto w = sim_->ledger().window(fn, t0, t_obs);
    rfrt_sum += w.rfrt;
    rfr_sum += w.rfr;
  }
  s.rfrt = rfrt_sum / static_cast<double>(functions_.size());
  s.rfr = rfr_sum / static_cast<double>(functions_.size());
  s.cost = vm_cost(sim_->ledger(), t0, t_obs);
  record.signals = s;
  record.reward = calibration_ ? step_reward(s, *calibration_, config_.beta) : 0.0;
  if (calibration_) {
    auto outside = [](const Calibration::Bounds& b, double v) { return v < b.min || v > b.max; };
    clamped_steps_ += outside(calibration_->rfrt, s.rfrt) || outside(calibration_->rfr, s.rfr) ||
                      outside(calibration_->cost, s.cost);
  }

  if (t_next > t_obs) sim_->schedule_marker(t_next, EventKind::ScalingTick);
  sim_->advance(t_next);
  ++steps_;
  reward_sum_ += record.reward;
  trace_.push_back(record);

  if (steps_ >= config_.steps_per_episode()) {
    sim_->run_until_idle();
    done_ = true;
  }
  select_target();
  return StepResult{observe(), record.reward, done_, record};
}

void ServerlessEnv::select_target() {
  if (config_.target_mode == TargetMode::RandomUniform) {
    std::uniform_int_distribution<std::size_t> pick(0, functions_.size() - 1);
    target_ = functions_[pick(rng_)];
    return;
  }
  const double t = sim_->now();
  double best = -std::numeric_limits<double>::infinity();
  for (FunctionId fn : functions_) {  // ascending ids, strict > keeps the lowest on ties
    const double r = sim_->ledger().window(fn, t - config_.decision_interval, t).rfrt;
    if (r > best) {
      best = r;
      target_ = fn;
    }
  }
}

std::vector<double> ServerlessEnv::observe() const {
  const auto& lim = config_.sim.limits;
  const auto snap = sim_->snapshot(target_, config_.decision_interval);
  std::vector<double> state;
  state.reserve(state_dim());
  auto push = [&state](double v) { state.push_back(std::clamp(v, 0.0, 1.0)); };
  for (const auto& v : snap.vms) {
    push(v.cpu_util);
    push(v.mem_util);
    push(v.cpu_alloc);
    push(v.mem_alloc);
    push(v.cpu_capacity / fleet_cpu_max_);
    push(v.mem_capacity / fleet_mem_max_);
    push(static_cast<double>(v.replicas) / lim.max_replicas);
  }
  const auto& f = snap.functions.at(target_);
  push(f.pod_cpu / lim.pod_cpu_max);
  push(f.pod_mem / lim.pod_mem_max);
  push(f.req_cpu / lim.pod_cpu_max);
  push(f.req_mem / lim.pod_mem_max);
  push(f.arrival_rate / config_.rate_cap);
  push(f.rfrt / config_.rfrt_cap);
  push(f.rfr);
  push(f.avg_pod_cpu_util);
  push(f.avg_pod_mem_util);
  return state;
}

EpisodeSummary ServerlessEnv::summary() const {
  EpisodeSummary s;
  if (!sim_) return s;
  const auto& ledger = sim_->ledger();
  try {
    s.rart = rart(ledger);
  } catch (const UndefinedMetricError&) {
    s.rart = std::numeric_limits<double>::quiet_NaN();
  }
  s.rfr = rfr(ledger);
  s.cost = ledger.total_cost();
  s.mean_rfrt = ledger.mean_rfrt();
  s.reward_sum = reward_sum_;
  s.steps = steps_;
  s.requests = ledger.function_requests();
  s.drops = ledger.function_drops();
  s.clamped_steps = clamped_steps_;
  return s;
}

std::string format_trace(const std::vector<StepRecord>& trace) {
  std::string out = "t\ttarget\ta1\ta2\ta3\ttarget_util\tcpu_delta\tmem_delta\tcpu_clamped\tmem_clamped\tn_delta\treward\n";
  for (const auto& r : trace) {
    out += fmt::format("{:.3f}\t{}\t{}\t{}\t{}\t{:.4f}\t{:.4f}\t{:.2f}\t{:.4f}\t{:.2f}\t{}\t{:.6f}\n",
                       r.time, r.target, r.action.a1, r.action.a2, r.action.a3,
                       r.decoded.target_util, r.decoded.cpu_delta, r.decoded.mem_delta,
                       r.clamped.cpu, r.clamped.mem, r.n_delta, r.reward);
  }
  return out;
}

}  // namespace autoscale
