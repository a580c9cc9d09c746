#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace autoscale {

using VmId = int;
using FunctionId = int;
using AppId = int;
using PodId = int;
using RequestId = long long;

/// Raised for malformed or inconsistent user-supplied configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a simulation invariant is violated at runtime.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hard limits shared by the simulator, the environment and the baselines.
struct ScalingLimits {
  int max_replicas = 80;
  double max_target_util = 0.90;
  double pod_cpu_min = 0.1;
  double pod_cpu_max = 1.0;
  double pod_mem_min = 128.0;
  double pod_mem_max = 3072.0;
};

struct VmSpec {
  VmId vm_id = 0;
  std::string instance_type;
  double cpu_capacity = 0.0;  // vCPU
  double mem_capacity = 0.0;  // MB
  double unit_price = 0.0;    // $ per hour

  void validate() const;
};

/// Per-function resource and latency profile. Values are averages from
/// profiling a warm instance.
struct FunctionProfile {
  FunctionId function_id = 0;
  std::string name;
  double req_cpu = 0.0;                 // vCPU per in-flight request
  double req_mem = 0.0;                 // MB per in-flight request
  double standard_response_time = 0.0;  // r0, seconds
  double cold_start_seconds = 0.0;
  double initial_pod_cpu = 0.0;
  double initial_pod_mem = 0.0;

  void validate(const ScalingLimits& limits = {}) const;
};

/// A user application: a chain of functions executed strictly in order.
struct Application {
  AppId app_id = 0;
  std::string name;
  std::vector<FunctionId> function_sequence;

  FunctionId entry_function() const { return function_sequence.front(); }
};

/// Everything needed to instantiate a simulated cluster.
struct ClusterSetup {
  std::vector<VmSpec> vms;
  std::vector<FunctionProfile> profiles;
  std::vector<Application> applications;

  /// Functions referenced by at least one application, ascending.
  std::vector<FunctionId> deployed_functions() const;
  const FunctionProfile& profile(FunctionId fn) const;
  const Application& application(AppId app) const;
  void validate(const ScalingLimits& limits = {}) const;
};

// Built-in data sets.
std::vector<VmSpec> paper_cluster();  // 5 each of the four instance types
std::vector<VmSpec> desk_cluster();   // 5 VMs
/// Illustrative profiles for 12 benchmark applications. Not measured data.
std::vector<FunctionProfile> bundled_profiles();
std::vector<Application> bundled_applications();

// JSON file loaders. Each throws ConfigError naming the file on failure.
std::vector<VmSpec> load_cluster(const std::filesystem::path& path);
std::vector<FunctionProfile> load_profiles(const std::filesystem::path& path);
std::vector<Application> load_applications(const std::filesystem::path& path);

void save_cluster(const std::filesystem::path& path, const std::vector<VmSpec>& vms);
void save_profiles(const std::filesystem::path& path,
                   const std::vector<FunctionProfile>& profiles);
void save_applications(const std::filesystem::path& path,
                       const std::vector<Application>& apps);

}  // namespace autoscale
