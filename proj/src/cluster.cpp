#include "autoscale/cluster.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/core.h>
#include <json.hpp>

namespace autoscale {

namespace {

using nlohmann::json;

struct InstanceType {
  const char* name;
  double vcpu;
  double mem_mb;
  double price;
};

constexpr InstanceType kInstanceTypes[] = {
    {"m6g.medium", 1.0, 4096.0, 0.048},
    {"t4g.large", 2.0, 8192.0, 0.0848},
    {"t4g.xlarge", 4.0, 16384.0, 0.1696},
    {"t4g.2xlarge", 8.0, 32768.0, 0.3392},
};

VmSpec make_vm(VmId id, const InstanceType& t) {
  return VmSpec{id, t.name, t.vcpu, t.mem_mb, t.price};
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open file", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("{}: cannot write file", path.string()));
  out << j.dump(2) << '\n';
}

template <typename T>
T field(const json& j, const char* key, const std::filesystem::path& path) {
  if (!j.contains(key)) {
    throw ConfigError(fmt::format("{}: missing field '{}'", path.string(), key));
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: field '{}': {}", path.string(), key, e.what()));
  }
}

}  // namespace

void VmSpec::validate() const {
  if (!(cpu_capacity > 0.0) || !(mem_capacity > 0.0) || !(unit_price >= 0.0)) {
    throw ConfigError(fmt::format("vm {}: capacities must be positive and price non-negative",
                                  vm_id));
  }
}

void FunctionProfile::validate(const ScalingLimits& limits) const {
  const bool positive = req_cpu > 0 && req_mem > 0 && standard_response_time > 0 &&
                        cold_start_seconds > 0 && initial_pod_cpu > 0 && initial_pod_mem > 0;
  if (!positive) {
    throw ConfigError(fmt::format("function {}: all profile fields must be positive", function_id));
  }
  if (initial_pod_cpu > limits.pod_cpu_max || initial_pod_mem > limits.pod_mem_max) {
    throw ConfigError(fmt::format("function {}: initial pod exceeds {} vCPU / {} MB", function_id,
                                  limits.pod_cpu_max, limits.pod_mem_max));
  }
  if (initial_pod_cpu < limits.pod_cpu_min || initial_pod_mem < limits.pod_mem_min) {
    throw ConfigError(fmt::format("function {}: initial pod below {} vCPU / {} MB", function_id,
                                  limits.pod_cpu_min, limits.pod_mem_min));
  }
  if (standard_response_time >= 10.0) {
    throw ConfigError(fmt::format("function {}: standard response time must be below 10 s",
                                  function_id));
  }
}

std::vector<FunctionId> ClusterSetup::deployed_functions() const {
  std::set<FunctionId> ids;
  for (const auto& app : applications) ids.insert(app.function_sequence.begin(), app.function_sequence.end());
  return {ids.begin(), ids.end()};
}

const FunctionProfile& ClusterSetup::profile(FunctionId fn) const {
  auto it = std::find_if(profiles.begin(), profiles.end(),
                         [fn](const FunctionProfile& p) { return p.function_id == fn; });
  if (it == profiles.end()) throw ConfigError(fmt::format("unknown function id {}", fn));
  return *it;
}

const Application& ClusterSetup::application(AppId app) const {
  auto it = std::find_if(applications.begin(), applications.end(),
                         [app](const Application& a) { return a.app_id == app; });
  if (it == applications.end()) throw ConfigError(fmt::format("unknown application id {}", app));
  return *it;
}

void ClusterSetup::validate(const ScalingLimits& limits) const {
  if (vms.empty()) throw ConfigError("cluster has no VMs");
  std::set<VmId> vm_ids;
  for (const auto& vm : vms) {
    vm.validate();
    if (!vm_ids.insert(vm.vm_id).second) {
      throw ConfigError(fmt::format("duplicate vm id {}", vm.vm_id));
    }
  }
  std::set<FunctionId> fn_ids;
  for (const auto& p : profiles) {
    p.validate(limits);
    if (!fn_ids.insert(p.function_id).second) {
      throw ConfigError(fmt::format("duplicate function id {}", p.function_id));
    }
  }
  std::set<AppId> app_ids;
  for (const auto& app : applications) {
    if (app.function_sequence.empty()) {
      throw ConfigError(fmt::format("application {} has an empty function sequence", app.app_id));
    }
    if (!app_ids.insert(app.app_id).second) {
      throw ConfigError(fmt::format("duplicate application id {}", app.app_id));
    }
    for (FunctionId fn : app.function_sequence) {
      if (!fn_ids.contains(fn)) {
        throw ConfigError(
            fmt::format("application {} references function {} without a profile", app.app_id, fn));
      }
    }
  }
}

std::vector<VmSpec> paper_cluster() {
  std::vector<VmSpec> vms;
  VmId id = 0;
  for (const auto& t : kInstanceTypes) {
    for (int i = 0; i < 5; ++i) vms.push_back(make_vm(id++, t));
  }
  return vms;
}

std::vector<VmSpec> desk_cluster() {
  return {make_vm(0, kInstanceTypes[0]), make_vm(1, kInstanceTypes[1]),
          make_vm(2, kInstanceTypes[1]), make_vm(3, kInstanceTypes[2]),
          make_vm(4, kInstanceTypes[3])};
}

std::vector<FunctionProfile> bundled_profiles() {
  // Sensitivity High/Medium/Low -> per-request cpu {0.25, 0.1, 0.05} vCPU and
  // memory {512, 256, 128} MB. Initial pods fit two concurrent requests.
  struct Row {
    FunctionId id;
    const char* name;
    char cpu;
    char mem;
    double r0;
    double cold;
  };
  constexpr Row rows[] = {
      {1, "primary", 'H', 'H', 1.2, 3.5},       {2, "float", 'H', 'H', 0.8, 3.0},
      {3, "matmul", 'H', 'H', 2.5, 4.0},        {4, "linpack", 'H', 'H', 3.0, 4.5},
      {5, "load", 'L', 'L', 0.3, 2.0},          {6, "dd", 'H', 'M', 1.5, 3.0},
      {7, "gzip", 'H', 'M', 2.2, 3.5},          {8, "thumb-upload", 'L', 'M', 0.4, 2.5},
      {9, "thumb-resize", 'L', 'M', 0.9, 3.0},  {10, "face-detect", 'M', 'M', 1.0, 5.0},
      {11, "face-align", 'M', 'M', 0.6, 4.5},   {12, "face-extract", 'M', 'M', 1.4, 5.5},
      {13, "face-match", 'M', 'M', 0.8, 4.0},   {14, "face-store", 'M', 'M', 0.3, 3.0},
      {15, "todo-gateway", 'L', 'L', 0.2, 2.0}, {16, "todo-auth", 'L', 'L', 0.25, 2.0},
      {17, "todo-list", 'L', 'L', 0.3, 2.5},    {18, "todo-create", 'L', 'L', 0.35, 2.5},
      {19, "todo-persist", 'L', 'L', 0.4, 3.0}, {20, "img-decode", 'M', 'M', 0.7, 3.5},
      {21, "img-filter", 'M', 'M', 1.1, 4.0},   {22, "video-split", 'H', 'H', 4.0, 6.0},
      {23, "video-transcode", 'H', 'H', 8.0, 5.5},
  };
  auto cpu_of = [](char s) { return s == 'H' ? 0.25 : s == 'M' ? 0.1 : 0.05; };
  auto mem_of = [](char s) { return s == 'H' ? 512.0 : s == 'M' ? 256.0 : 128.0; };
  std::vector<FunctionProfile> out;
  for (const auto& r : rows) {
    FunctionProfile p;
    p.function_id = r.id;
    p.name = r.name;
    p.req_cpu = cpu_of(r.cpu);
    p.req_mem = mem_of(r.mem);
    p.standard_response_time = r.r0;
    p.cold_start_seconds = r.cold;
    p.initial_pod_cpu = std::max(0.1, 2 * p.req_cpu);
    p.initial_pod_mem = std::max(128.0, 2 * p.req_mem);
    out.push_back(p);
  }
  return out;
}

std::vector<Application> bundled_applications() {
  return {
      {1, "primary", {1}},
      {2, "float", {2}},
      {3, "matrix-multiplication", {3}},
      {4, "linpack", {4}},
      {5, "load", {5}},
      {6, "dd", {6}},
      {7, "gzip-compression", {7}},
      {8, "thumbnail-generator", {8, 9}},
      {9, "facial-recognition", {10, 11, 12, 13, 14}},
      {10, "todo-api", {15, 16, 17, 18, 19}},
      {11, "image-processing", {20, 21}},
      {12, "video-processing", {22, 23}},
  };
}

std::vector<VmSpec> load_cluster(const std::filesystem::path& path) {
  const json j = read_json(path);
  const json& list = j.contains("vms") ? j.at("vms") : j;
  if (!list.is_array()) throw ConfigError(fmt::format("{}: expected a list of VMs", path.string()));
  std::vector<VmSpec> vms;
  for (const auto& e : list) {
    VmSpec vm;
    vm.vm_id = field<int>(e, "vm_id", path);
    vm.instance_type = e.value("instance_type", std::string{});
    vm.cpu_capacity = field<double>(e, "cpu_capacity", path);
    vm.mem_capacity = field<double>(e, "mem_capacity", path);
    vm.unit_price = field<double>(e, "unit_price", path);
    vms.push_back(vm);
  }
  return vms;
}

std::vector<FunctionProfile> load_profiles(const std::filesystem::path& path) {
  const json j = read_json(path);
  const json& list = j.contains("functions") ? j.at("functions") : j;
  if (!list.is_array()) {
    throw ConfigError(fmt::format("{}: expected a list of function profiles", path.string()));
  }
  std::vector<FunctionProfile> out;
  for (const auto& e : list) {
    FunctionProfile p;
    p.function_id = field<int>(e, "function_id", path);
    p.name = e.value("name", std::string{});
    p.req_cpu = field<double>(e, "req_cpu", path);
    p.req_mem = field<double>(e, "req_mem", path);
    p.standard_response_time = field<double>(e, "standard_response_time", path);
    p.cold_start_seconds = field<double>(e, "cold_start_seconds", path);
    p.initial_pod_cpu = field<double>(e, "initial_pod_cpu", path);
    p.initial_pod_mem = field<double>(e, "initial_pod_mem", path);
    out.push_back(p);
  }
  return out;
}

std::vector<Application> load_applications(const std::filesystem::path& path) {
  const json j = read_json(path);
  const json& list = j.contains("applications") ? j.at("applications") : j;
  if (!list.is_array()) {
    throw ConfigError(fmt::format("{}: expected a list of applications", path.string()));
  }
  std::vector<Application> out;
  for (const auto& e : list) {
    Application a;
    a.app_id = field<int>(e, "app_id", path);
    a.name = e.value("name", std::string{});
    a.function_sequence = field<std::vector<FunctionId>>(e, "function_sequence", path);
    if (a.function_sequence.empty()) {
      throw ConfigError(fmt::format("{}: application {} has no functions", path.string(), a.app_id));
    }
    out.push_back(std::move(a));
  }
  return out;
}

void save_cluster(const std::filesystem::path& path, const std::vector<VmSpec>& vms) {
  json list = json::array();
  for (const auto& vm : vms) {
    list.push_back({{"vm_id", vm.vm_id},
                    {"instance_type", vm.instance_type},
                    {"cpu_capacity", vm.cpu_capacity},
                    {"mem_capacity", vm.mem_capacity},
                    {"unit_price", vm.unit_price}});
  }
  write_json(path, json{{"vms", list}});
}

void save_profiles(const std::filesystem::path& path,
                   const std::vector<FunctionProfile>& profiles) {
  json list = json::array();
  for (const auto& p : profiles) {
    list.push_back({{"function_id", p.function_id},
                    {"name", p.name},
                    {"req_cpu", p.req_cpu},
                    {"req_mem", p.req_mem},
                    {"standard_response_time", p.standard_response_time},
                    {"cold_start_seconds", p.cold_start_seconds},
                    {"initial_pod_cpu", p.initial_pod_cpu},
                    {"initial_pod_mem", p.initial_pod_mem}});
  }
  write_json(path, json{{"functions", list}});
}

void save_applications(const std::filesystem::path& path, const std::vector<Application>& apps) {
  json list = json::array();
  for (const auto& a : apps) {
    list.push_back(
        {{"app_id", a.app_id}, {"name", a.name}, {"function_sequence", a.function_sequence}});
  }
  write_json(path, json{{"applications", list}});
}

}  // namespace autoscale
