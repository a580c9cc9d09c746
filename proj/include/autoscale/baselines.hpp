#pragma once

#include <string>
#include <vector>

#include "autoscale/agents.hpp"
#include "autoscale/simulator.hpp"

namespace autoscale {

struct BaselinePolicyConfig {
  struct Knative {
    double target_concurrency = 4.0;
    double target_utilization = 0.75;
  } knative;
  struct KubeCpu {
    double cpu_threshold = 0.50;
  } kube_cpu;
  struct OpenFaas {
    double capacity_threshold = 4.0;
    double rps_threshold = 8.0;
    double cpu_threshold = 0.50;
    double long_exec_cutoff = 2.0;   // seconds of r0
    double high_rate_cutoff = 20.0;  // req/s
  } openfaas;

  void validate() const;
};

enum class BaselineKind { Knative, KubeCpu, OpenFaas };

BaselineKind baseline_by_name(const std::string& name);  // "knative", "kube-cpu", "openfaas"
std::string to_string(BaselineKind kind);
std::vector<BaselineKind> all_baselines();

/// Per-function inputs every rule reads.
struct BaselineInput {
  int replicas = 0;        // Creating + Ready pods
  int queued = 0;
  int in_flight = 0;       // executing + queued requests
  double cpu_util = 0.0;   // mean pod cpu utilization (1.0 with no pods but queued traffic)
  double rate = 0.0;       // windowed arrival rate, req/s
  double r0 = 0.0;         // standard response time, s
  int max_replicas = 80;
};

BaselineInput baseline_input(const Simulator& sim, FunctionId fn, double window);

int knative_decide(const BaselinePolicyConfig& cfg, const BaselineInput& in);
int kube_cpu_decide(const BaselinePolicyConfig& cfg, const BaselineInput& in);
int openfaas_decide(const BaselinePolicyConfig& cfg, const BaselineInput& in);
int baseline_decide(BaselineKind kind, const BaselinePolicyConfig& cfg, const BaselineInput& in);

/// Applies the rule to every deployed function, horizontally only.
void apply_baseline(BaselineKind kind, const BaselinePolicyConfig& cfg, Simulator& sim, double window);

StepPolicy baseline_policy(BaselineKind kind, BaselinePolicyConfig cfg);

}  // namespace autoscale
