#include "autoscale/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace autoscale {

namespace {

constexpr double kEps = 1e-9;

int ceil_count(double x) { return static_cast<int>(std::ceil(x - kEps)); }

int clamp_replicas(int desired, int max_replicas) { return std::clamp(desired, 0, max_replicas); }

}  // namespace

void BaselinePolicyConfig::validate() const {
  if (!(knative.target_concurrency > 0.0)) throw ConfigError("baselines: knative target_concurrency must be positive");
  if (!(knative.target_utilization > 0.0) || knative.target_utilization > 1.0) {
    throw ConfigError("baselines: knative target_utilization must lie in (0, 1]");
  }
  if (!(kube_cpu.cpu_threshold > 0.0)) throw ConfigError("baselines: kube-cpu threshold must be positive");
  if (!(openfaas.capacity_threshold > 0.0) || !(openfaas.rps_threshold > 0.0) ||
      !(openfaas.cpu_threshold > 0.0) || !(openfaas.long_exec_cutoff > 0.0) ||
      !(openfaas.high_rate_cutoff > 0.0)) {
    throw ConfigError("baselines: openfaas thresholds must be positive");
  }
}

BaselineKind baseline_by_name(const std::string& name) {
  if (name == "knative") return BaselineKind::Knative;
  if (name == "kube-cpu") return BaselineKind::KubeCpu;
  if (name == "openfaas") return BaselineKind::OpenFaas;
  throw ConfigError(fmt::format("unknown baseline '{}' (expected knative, kube-cpu or openfaas)", name));
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Knative: return "knative";
    case BaselineKind::KubeCpu: return "kube-cpu";
    case BaselineKind::OpenFaas: return "openfaas";
  }
  return "?";
}

std::vector<BaselineKind> all_baselines() {
  return {BaselineKind::Knative, BaselineKind::KubeCpu, BaselineKind::OpenFaas};
}

BaselineInput baseline_input(const Simulator& sim, FunctionId fn, double window) {
  BaselineInput in;
  in.replicas = sim.pod_count(fn);
  in.queued = sim.queued_count(fn);
  in.in_flight = sim.running_count(fn) + in.queued;
  in.cpu_util = sim.avg_pod_cpu_util(fn);
  const double t = sim.now();
  in.rate = sim.ledger().window(fn, t - window, t).rate;
  in.r0 = sim.setup().profile(fn).standard_response_time;
  in.max_replicas = sim.config().limits.max_replicas;
  return in;
}

int knative_decide(const BaselinePolicyConfig& cfg, const BaselineInput& in) {
  const double per_pod = cfg.knative.target_concurrency * cfg.knative.target_utilization;
  return clamp_replicas(ceil_count(in.in_flight / per_pod), in.max_replicas);
}

int kube_cpu_decide(const BaselinePolicyConfig& cfg, const BaselineInput& in) {
  const int basis = in.replicas == 0 && in.queued > 0 ? 1 : in.replicas;
  return clamp_replicas(ceil_count(basis * in.cpu_util / cfg.kube_cpu.cpu_threshold), in.max_replicas);
}

int openfaas_decide(const BaselinePolicyConfig& cfg, const BaselineInput& in) {
  const auto& o = cfg.openfaas;
  if (in.r0 > o.long_exec_cutoff) {
    return clamp_replicas(ceil_count(in.in_flight / o.capacity_threshold), in.max_replicas);
  }
  if (in.rate > o.high_rate_cutoff) {
    return clamp_replicas(ceil_count(in.rate / o.rps_threshold), in.max_replicas);
  }
  BaselinePolicyConfig cpu_mode = cfg;
  cpu_mode.kube_cpu.cpu_threshold = o.cpu_threshold;
  return kube_cpu_decide(cpu_mode, in);
}

int baseline_decide(BaselineKind kind, const BaselinePolicyConfig& cfg, const BaselineInput& in) {
  switch (kind) {
    case BaselineKind::Knative: return knative_decide(cfg, in);
    case BaselineKind::KubeCpu: return kube_cpu_decide(cfg, in);
    case BaselineKind::OpenFaas: return openfaas_decide(cfg, in);
  }
  return in.replicas;
}

void apply_baseline(BaselineKind kind, const BaselinePolicyConfig& cfg, Simulator& sim, double window) {
  // Decide for every function first so one function's scaling cannot shift
  // another's inputs within the same tick.
  std::vector<std::pair<FunctionId, int>> deltas;
  for (FunctionId fn : sim.setup().deployed_functions()) {
    const auto in = baseline_input(sim, fn, window);
    deltas.emplace_back(fn, baseline_decide(kind, cfg, in) - in.replicas);
  }
  for (const auto& [fn, delta] : deltas) sim.apply_horizontal(fn, delta);
}

StepPolicy baseline_policy(BaselineKind kind, BaselinePolicyConfig cfg) {
  cfg.validate();
  return [kind, cfg](ServerlessEnv& env, const std::vector<double>&) {
    const double window = env.config().decision_interval;
    return env.step_with([&](Simulator& sim) { apply_baseline(kind, cfg, sim, window); });
  };
}

}  // namespace autoscale
