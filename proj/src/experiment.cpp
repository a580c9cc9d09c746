#include "autoscale/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/chrono.h>
#include <fmt/core.h>
#include <json.hpp>

namespace autoscale {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.10g}", v);
}

// ---- value parsing -------------------------------------------------------

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("'{}' is not a number", s));
  }
  if (used != s.size()) throw ConfigError(fmt::format("'{}' is not a number", s));
  return v;
}

long long to_int(const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("'{}' is not an integer", s));
  }
  if (used != s.size()) throw ConfigError(fmt::format("'{}' is not an integer", s));
  return v;
}

bool to_bool(const std::string& s) {
  const auto l = boost::algorithm::to_lower_copy(s);
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw ConfigError(fmt::format("'{}' is not a boolean", s));
}

std::vector<std::string> to_list(const std::string& s) {
  std::vector<std::string> parts;
  if (boost::algorithm::trim_copy(s).empty()) return parts;
  boost::algorithm::split(parts, s, boost::is_any_of(","));
  for (auto& p : parts) boost::algorithm::trim(p);
  return parts;
}

template <typename T, typename F>
std::vector<T> map_list(const std::string& s, F f) {
  std::vector<T> out;
  for (const auto& p : to_list(s)) out.push_back(static_cast<T>(f(p)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) {
      out += num(v[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += v[i];
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::string opt_path(const std::optional<fs::path>& p) { return p ? p->string() : ""; }
std::optional<fs::path> to_opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

std::string sync_name(SyncMode m) {
  return m == SyncMode::DeterministicRoundRobin ? "deterministic" : "asynchronous";
}

SyncMode to_sync(const std::string& s) {
  if (s == "deterministic") return SyncMode::DeterministicRoundRobin;
  if (s == "asynchronous") return SyncMode::Asynchronous;
  throw ConfigError(fmt::format("sync_mode '{}' must be asynchronous or deterministic", s));
}

std::string active_name(ActiveTimeMode m) { return m == ActiveTimeMode::InFlight ? "in-flight" : "hosting-pod"; }
ActiveTimeMode to_active(const std::string& s) {
  if (s == "in-flight") return ActiveTimeMode::InFlight;
  if (s == "hosting-pod") return ActiveTimeMode::HostingPod;
  throw ConfigError(fmt::format("active_time '{}' must be in-flight or hosting-pod", s));
}

std::string arrival_name(ArrivalModel m) { return m == ArrivalModel::Uniform ? "uniform" : "poisson"; }
ArrivalModel to_arrival(const std::string& s) {
  if (s == "uniform") return ArrivalModel::Uniform;
  if (s == "poisson") return ArrivalModel::Poisson;
  throw ConfigError(fmt::format("arrival_model '{}' must be uniform or poisson", s));
}

// ---- field table ---------------------------------------------------------

struct Field {
  std::string key;  // section.name
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define AS_DOUBLE(KEY, MEMBER)                                                        \
  Field {                                                                             \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(v); }, \
        [](const ExperimentConfig& c) { return num(c.MEMBER); }                       \
  }
#define AS_INT(KEY, MEMBER)                                                                        \
  Field {                                                                                          \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = static_cast<decltype(c.MEMBER)>(to_int(v)); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }                         \
  }
#define AS_BOOL(KEY, MEMBER)                                                        \
  Field {                                                                           \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_bool(v); }, \
        [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"experiment.preset", [](ExperimentConfig& c, const std::string& v) { c.preset = v; },
       [](const ExperimentConfig& c) { return c.preset; }},
      {"experiment.cluster", [](ExperimentConfig& c, const std::string& v) { c.cluster_file = to_opt_path(v); },
       [](const ExperimentConfig& c) { return opt_path(c.cluster_file); }},
      {"experiment.profiles", [](ExperimentConfig& c, const std::string& v) { c.profiles_file = to_opt_path(v); },
       [](const ExperimentConfig& c) { return opt_path(c.profiles_file); }},
      {"experiment.applications_file",
       [](ExperimentConfig& c, const std::string& v) { c.applications_file = to_opt_path(v); },
       [](const ExperimentConfig& c) { return opt_path(c.applications_file); }},
      {"experiment.traces", [](ExperimentConfig& c, const std::string& v) { c.traces_file = to_opt_path(v); },
       [](const ExperimentConfig& c) { return opt_path(c.traces_file); }},
      {"experiment.output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
       [](const ExperimentConfig& c) { return c.output_dir.string(); }},
      {"experiment.calibration",
       [](ExperimentConfig& c, const std::string& v) { c.calibration_file = to_opt_path(v); },
       [](const ExperimentConfig& c) { return opt_path(c.calibration_file); }},
      {"experiment.betas",
       [](ExperimentConfig& c, const std::string& v) { c.betas = map_list<double>(v, to_double); },
       [](const ExperimentConfig& c) { return join(c.betas); }},
      {"experiment.worker_counts",
       [](ExperimentConfig& c, const std::string& v) { c.worker_counts = map_list<int>(v, to_int); },
       [](const ExperimentConfig& c) { return join(c.worker_counts); }},
      {"experiment.applications",
       [](ExperimentConfig& c, const std::string& v) { c.applications = map_list<AppId>(v, to_int); },
       [](const ExperimentConfig& c) { return join(c.applications); }},
      AS_INT("experiment.apps_per_workload", apps_per_workload),
      AS_INT("experiment.train_workloads", train_workloads),
      AS_INT("experiment.workloads_per_band", workloads_per_band),
      AS_INT("experiment.calibration_workloads", calibration_workloads),
      {"experiment.eval_bands", [](ExperimentConfig& c, const std::string& v) { c.eval_bands = to_list(v); },
       [](const ExperimentConfig& c) { return join(c.eval_bands); }},
      AS_INT("experiment.seed", seed),
      AS_INT("experiment.synthetic_traces", synthetic_traces),
      AS_INT("experiment.synthetic_trace_minutes", synthetic_trace_minutes),
      {"experiment.arrival_model", [](ExperimentConfig& c, const std::string& v) { c.arrival_model = to_arrival(v); },
       [](const ExperimentConfig& c) { return arrival_name(c.arrival_model); }},
      {"experiment.agent", [](ExperimentConfig& c, const std::string& v) { c.agent = v; },
       [](const ExperimentConfig& c) { return c.agent; }},

      AS_DOUBLE("env.decision_interval", env.decision_interval),
      AS_DOUBLE("env.observe_delay", env.observe_delay),
      AS_DOUBLE("env.episode_duration", env.episode_duration),
      AS_INT("env.initial_replicas", env.initial_replicas),
      AS_INT("env.action_levels", env.action_levels),
      AS_DOUBLE("env.min_target_util", env.min_target_util),
      AS_DOUBLE("env.max_cpu_step", env.max_cpu_step),
      AS_DOUBLE("env.max_mem_step", env.max_mem_step),
      AS_DOUBLE("env.rate_cap", env.rate_cap),
      AS_DOUBLE("env.rfrt_cap", env.rfrt_cap),
      AS_INT("env.max_replicas", env.sim.limits.max_replicas),
      AS_DOUBLE("env.max_target_util", env.sim.limits.max_target_util),
      AS_DOUBLE("env.pod_cpu_min", env.sim.limits.pod_cpu_min),
      AS_DOUBLE("env.pod_cpu_max", env.sim.limits.pod_cpu_max),
      AS_DOUBLE("env.pod_mem_min", env.sim.limits.pod_mem_min),
      AS_DOUBLE("env.pod_mem_max", env.sim.limits.pod_mem_max),
      AS_DOUBLE("env.retry_interval", env.sim.retry_interval),
      AS_INT("env.max_retries", env.sim.max_retries),
      AS_DOUBLE("env.cpu_grid_step", env.sim.cpu_grid_step),
      AS_DOUBLE("env.mem_grid_step", env.sim.mem_grid_step),
      {"env.active_time", [](ExperimentConfig& c, const std::string& v) { c.env.sim.active_mode = to_active(v); },
       [](const ExperimentConfig& c) { return active_name(c.env.sim.active_mode); }},
      AS_BOOL("env.execution_noise", env.sim.execution_noise),
      AS_DOUBLE("env.noise_sigma", env.sim.noise_sigma),

      AS_INT("train.workers", train.workers),
      AS_INT("train.episodes", train.episodes),
      AS_DOUBLE("train.gamma", train.gamma),
      AS_DOUBLE("train.lr", train.lr),
      AS_INT("train.update_interval", train.update_interval),
      AS_DOUBLE("train.entropy_coef", train.entropy_coef),
      AS_DOUBLE("train.beta", train.beta),
      {"train.sync_mode", [](ExperimentConfig& c, const std::string& v) { c.train.sync_mode = to_sync(v); },
       [](const ExperimentConfig& c) { return sync_name(c.train.sync_mode); }},
      AS_DOUBLE("train.max_grad_norm", train.max_grad_norm),
      {"train.hidden", [](ExperimentConfig& c, const std::string& v) { c.train.hidden = map_list<int>(v, to_int); },
       [](const ExperimentConfig& c) { return join(c.train.hidden); }},

      AS_INT("dqn.episodes", dqn.episodes),
      AS_DOUBLE("dqn.gamma", dqn.gamma),
      AS_DOUBLE("dqn.lr", dqn.lr),
      AS_INT("dqn.replay_capacity", dqn.replay_capacity),
      AS_INT("dqn.batch_size", dqn.batch_size),
      AS_INT("dqn.target_refresh", dqn.target_refresh),
      AS_DOUBLE("dqn.eps_start", dqn.eps_start),
      AS_DOUBLE("dqn.eps_end", dqn.eps_end),
      AS_DOUBLE("dqn.eps_decay_fraction", dqn.eps_decay_fraction),
      {"dqn.hidden", [](ExperimentConfig& c, const std::string& v) { c.dqn.hidden = map_list<int>(v, to_int); },
       [](const ExperimentConfig& c) { return join(c.dqn.hidden); }},

      AS_DOUBLE("baselines.knative_target_concurrency", baselines.knative.target_concurrency),
      AS_DOUBLE("baselines.knative_target_utilization", baselines.knative.target_utilization),
      AS_DOUBLE("baselines.kube_cpu_threshold", baselines.kube_cpu.cpu_threshold),
      AS_DOUBLE("baselines.openfaas_capacity_threshold", baselines.openfaas.capacity_threshold),
      AS_DOUBLE("baselines.openfaas_rps_threshold", baselines.openfaas.rps_threshold),
      AS_DOUBLE("baselines.openfaas_cpu_threshold", baselines.openfaas.cpu_threshold),
      AS_DOUBLE("baselines.openfaas_long_exec_cutoff", baselines.openfaas.long_exec_cutoff),
      AS_DOUBLE("baselines.openfaas_high_rate_cutoff", baselines.openfaas.high_rate_cutoff),
  };
  return table;
}

#undef AS_DOUBLE
#undef AS_INT
#undef AS_BOOL

// ---- CSV helpers ---------------------------------------------------------

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot write", path.string()));
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name, const fs::path& source) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw std::runtime_error(fmt::format("{}: missing column '{}'", source.string(), name));
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("{}: cannot open", path.string()));
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    boost::algorithm::split(cells, line, boost::is_any_of(","));
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) {
        throw std::runtime_error(fmt::format("{}: row with {} cells, header has {}", path.string(),
                                             cells.size(), t.header.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

int worker_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

}  // namespace

// ---- config --------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (preset != "desk" && preset != "paper") throw ConfigError(fmt::format("unknown preset '{}'", preset));
  for (double b : betas) {
    if (b < 0.0 || b > 1.0) throw ConfigError(fmt::format("beta {} outside [0, 1]", b));
  }
  if (betas.empty()) throw ConfigError("betas list is empty");
  if (worker_counts.empty()) throw ConfigError("worker_counts list is empty");
  for (int w : worker_counts) {
    if (w < 1) throw ConfigError("worker counts must be >= 1");
  }
  if (apps_per_workload < 1) throw ConfigError("apps_per_workload must be >= 1");
  if (apps_per_workload > 4) throw ConfigError("training workloads allow at most 4 entry functions");
  if (train_workloads < 1 || workloads_per_band < 1 || calibration_workloads < 1) {
    throw ConfigError("workload counts must be >= 1");
  }
  for (const auto& b : eval_bands) band_by_name(b);
  if (synthetic_traces < 1 || synthetic_trace_minutes < 1) throw ConfigError("synthetic trace sizes must be >= 1");
  if (agent != "a3c" && agent != "dqn") throw ConfigError(fmt::format("unknown agent '{}' (a3c or dqn)", agent));
  for (const auto& p : {cluster_file, profiles_file, applications_file, traces_file}) {
    if (p && !fs::exists(resolve(*p))) {
      throw ConfigError(fmt::format("referenced file {} does not exist", resolve(*p).string()));
    }
  }
  env.validate();
  train.validate();
  dqn.validate();
  baselines.validate();
}

fs::path ExperimentConfig::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

fs::path ExperimentConfig::calibration_path() const {
  return calibration_file ? resolve(*calibration_file) : resolve(output_dir) / "calibration.json";
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "desk") {
    c.output_dir = "runs/desk";
    c.applications = {1, 2, 5, 6};
    c.apps_per_workload = 4;
    c.train_workloads = 20;
    c.workloads_per_band = 10;
    c.env.episode_duration = 60.0;
    c.train.workers = 3;
    c.train.episodes = 300;
    // 60 s episodes give 6 decisions, so 300 episodes are only 300 updates;
    // the default rate of 1e-4 barely moves the policy in that budget.
    c.train.lr = 1e-3;
    c.dqn.lr = 1e-3;
    c.worker_counts = {3};
    c.dqn.episodes = 900;
  } else if (name == "paper") {
    c.output_dir = "runs/paper";
    c.applications = {1, 2, 3, 4, 5, 6, 7, 8, 11, 12};
    c.apps_per_workload = 4;
    c.train_workloads = 60;
    c.workloads_per_band = 60;
    c.env.episode_duration = 300.0;
    c.train.workers = 5;
    c.train.episodes = 500;
    c.worker_counts = {3, 5};
    c.dqn.episodes = 2500;
  } else {
    throw ConfigError(fmt::format("unknown preset '{}' (desk or paper)", name));
  }
  return c;
}

ExperimentConfig parse_config(std::istream& in, const fs::path& base_dir, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.line(), e.message()));
  }
  std::string preset = "desk";
  if (auto exp = tree.get_child_optional("experiment")) {
    preset = exp->get<std::string>("preset", preset);
  }
  ExperimentConfig cfg = preset_config(preset);
  cfg.base_dir = base_dir;
  std::map<std::string, const Field*> index;
  for (const auto& f : fields()) index[f.key] = &f;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(fmt::format("{}: key '{}' must be inside a section", source, section));
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto it = index.find(full);
      if (it == index.end()) throw ConfigError(fmt::format("{}: unknown key [{}] {}", source, section, key));
      try {
        it->second->set(cfg, boost::algorithm::trim_copy(value.data()));
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: [{}] {}: {}", source, section, key, e.what()));
      }
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open config file", path.string()));
  return parse_config(in, path.parent_path().empty() ? fs::path(".") : path.parent_path(), path.string());
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return fmt::format("{:016x}", fnv1a64(canonical_config(cfg)));
}

// ---- resources and workloads ---------------------------------------------

Resources load_resources(const ExperimentConfig& cfg) {
  Resources r;
  if (cfg.cluster_file) {
    r.vms = load_cluster(cfg.resolve(*cfg.cluster_file));
  } else {
    r.vms = cfg.preset == "paper" ? paper_cluster() : desk_cluster();
  }
  r.profiles = cfg.profiles_file ? load_profiles(cfg.resolve(*cfg.profiles_file)) : bundled_profiles();
  auto apps = cfg.applications_file ? load_applications(cfg.resolve(*cfg.applications_file))
                                    : bundled_applications();
  if (cfg.applications.empty()) {
    r.applications = apps;
  } else {
    for (AppId id : cfg.applications) {
      auto it = std::find_if(apps.begin(), apps.end(), [id](const Application& a) { return a.app_id == id; });
      if (it == apps.end()) throw ConfigError(fmt::format("application {} is not defined", id));
      r.applications.push_back(*it);
    }
  }
  r.traces = cfg.traces_file ? load_traces(cfg.resolve(*cfg.traces_file))
                             : synthetic_traces(cfg.synthetic_traces, cfg.synthetic_trace_minutes, cfg.seed);
  ClusterSetup{r.vms, r.profiles, r.applications}.validate(cfg.env.sim.limits);
  return r;
}

std::vector<WorkloadSpec> make_workload_set(const ExperimentConfig& cfg, const Resources& res,
                                            const RateBand& band, int count, WorkloadPurpose purpose) {
  std::vector<WorkloadSpec> out;
  const auto per = std::min<std::size_t>(static_cast<std::size_t>(cfg.apps_per_workload), res.applications.size());
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed =
        fnv1a64(fmt::format("{}/{}/{}/{}", cfg.seed, static_cast<int>(purpose), band.name, i));
    std::mt19937_64 rng(seed);
    std::vector<Application> apps = res.applications;
    std::shuffle(apps.begin(), apps.end(), rng);
    apps.resize(per);
    std::sort(apps.begin(), apps.end(), [](const Application& a, const Application& b) { return a.app_id < b.app_id; });
    auto w = make_banded_workload(apps, res.traces, band, cfg.env.episode_duration, seed);
    w.model = cfg.arrival_model;
    if (purpose == WorkloadPurpose::Training) w.max_entry_functions = 4;
    out.push_back(std::move(w));
  }
  return out;
}

EnvBlueprint make_blueprint(const ExperimentConfig& cfg, const Resources& res,
                            std::optional<Calibration> calibration) {
  return EnvBlueprint{res.vms, res.profiles, cfg.env, std::move(calibration)};
}

std::string metadata_header(const ExperimentConfig& cfg, const std::string& mode) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("# autoscale {}\n# config_hash={}\n# seed={}\n# mode={}\n# timestamp={:%Y-%m-%dT%H:%M:%SZ}\n",
                     kCodeVersion, config_hash(cfg), cfg.seed, mode, fmt::gmtime(now));
}

bool is_timestamp_line(const std::string& line) { return line.rfind("# timestamp=", 0) == 0; }

// ---- evaluation core -----------------------------------------------------

std::vector<EpisodeSummary> evaluate_policy(const EnvBlueprint& blueprint,
                                            const std::vector<WorkloadSpec>& workloads,
                                            const std::function<StepPolicy()>& make_policy,
                                            std::uint64_t seed, int threads) {
  std::vector<EpisodeSummary> out(workloads.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr error;
  auto run = [&] {
    try {
      ServerlessEnv env = blueprint.make(blueprint.env.beta);
      env.set_target_mode(TargetMode::HighestRfrt);
      const StepPolicy policy = make_policy();
      for (std::size_t i = next++; i < workloads.size(); i = next++) {
        out[i] = run_episode(env, workloads[i], seed + i, policy);
      }
    } catch (...) {
      std::lock_guard lock(err_mu);
      if (!error) error = std::current_exception();
      next = workloads.size();
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(workloads.size())));
  if (n == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// ---- commands ------------------------------------------------------------

Calibration cmd_calibrate(const ExperimentConfig& cfg, std::ostream& log) {
  const Resources res = load_resources(cfg);
  const EnvBlueprint bp = make_blueprint(cfg, res, std::nullopt);
  CalibrationBuilder builder;
  const auto policy = baseline_policy(BaselineKind::KubeCpu, cfg.baselines);
  for (const auto& band_name : cfg.eval_bands) {
    const auto band = band_by_name(band_name);
    const auto set = make_workload_set(cfg, res, band, cfg.calibration_workloads, WorkloadPurpose::Calibration);
    ServerlessEnv env = bp.make(cfg.env.beta);
    for (std::size_t i = 0; i < set.size(); ++i) {
      run_episode(env, set[i], cfg.seed + i, policy);
      for (const auto& step : env.trace()) builder.observe(step.signals);
    }
    log << fmt::format("calibrate: band {} ({} workloads)\n", band_name, set.size());
  }
  const Calibration cal = builder.build();
  const fs::path path = cfg.calibration_path();
  fs::create_directories(path.parent_path());
  cal.save(path);
  log << fmt::format("calibrate: {} step samples -> {}\n", builder.samples(), path.string());
  log << fmt::format("  rfrt [{}, {}]  rfr [{}, {}]  cost [{}, {}]\n", num(cal.rfrt.min), num(cal.rfrt.max),
                     num(cal.rfr.min), num(cal.rfr.max), num(cal.cost.min), num(cal.cost.max));
  return cal;
}

std::string run_tag(const std::string& agent, double beta, int workers) {
  return fmt::format("{}_b{:.2f}_w{}", agent, beta, workers);
}

namespace {

Calibration require_calibration(const ExperimentConfig& cfg) {
  const fs::path path = cfg.calibration_path();
  if (!fs::exists(path)) {
    throw CalibrationError(fmt::format("no calibration at {}; run the `calibrate` command first", path.string()));
  }
  return Calibration::load(path);
}

void write_curve(const fs::path& path, const std::string& header, const std::vector<EpisodeStats>& curve) {
  auto out = open_out(path);
  out << header << "episode,worker,reward,rfrt,rfr,cost,rart,clamped_steps,updates\n";
  for (const auto& s : curve) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", s.episode, s.worker, num(s.reward), num(s.rfrt),
                       num(s.rfr), num(s.cost), num(s.rart), s.clamped_steps, s.updates);
  }
}

}  // namespace

TrainRun cmd_train(const ExperimentConfig& cfg, double beta, int workers, std::ostream& log) {
  if (beta < 0.0 || beta > 1.0) throw ConfigError(fmt::format("beta {} outside [0, 1]", beta));
  const Calibration cal = require_calibration(cfg);
  const Resources res = load_resources(cfg);
  const EnvBlueprint bp = make_blueprint(cfg, res, cal);
  const auto pool = make_workload_set(cfg, res, training_band(), cfg.train_workloads, WorkloadPurpose::Training);

  TrainRun run;
  run.tag = run_tag(cfg.agent, beta, cfg.agent == "dqn" ? 1 : workers);
  run.dir = cfg.resolve(cfg.output_dir) / "train" / run.tag;
  run.checkpoint = run.dir / "checkpoint.bin";
  run.curve = run.dir / "curve.csv";

  std::optional<nn::Checkpoint> resume;
  int episode_offset = 0;
  if (cfg.resume && fs::exists(run.checkpoint)) {
    resume = nn::load_checkpoint(run.checkpoint);
    episode_offset = json::parse(resume->metadata).value("episodes", 0);
    log << fmt::format("train {}: resuming after {} episodes\n", run.tag, episode_offset);
  }

  const int every = std::max(1, (cfg.agent == "dqn" ? cfg.dqn.episodes : cfg.train.episodes) / 10);
  EpisodeCallback progress = [&](const EpisodeStats& s) {
    if (s.worker == 0 && (s.episode + 1) % every == 0) {
      log << fmt::format("train {}: episode {} reward {:.4f} rfr {:.4f} cost {:.6f}\n", run.tag,
                         s.episode + 1 + episode_offset, s.reward, s.rfr, s.cost);
    }
  };

  json meta = {{"tag", run.tag},   {"agent", cfg.agent}, {"beta", beta},
               {"workers", workers}, {"config_hash", config_hash(cfg)}, {"seed", cfg.seed},
               {"state_dim", bp.state_dim()}};
  std::vector<EpisodeStats> curve;
  std::string mode;
  if (cfg.agent == "dqn") {
    DqnConfig dc = cfg.dqn;
    dc.beta = beta;
    dc.seed = cfg.seed;
    auto result = train_dqn(bp, pool, dc, resume ? &*resume : nullptr, progress);
    meta["episodes"] = episode_offset + dc.episodes;
    meta["workers"] = 1;
    fs::create_directories(run.dir);
    nn::save_checkpoint(run.checkpoint, make_dqn_checkpoint(result, meta.dump()));
    curve = std::move(result.curve);
    mode = "deterministic";
  } else {
    TrainConfig tc = cfg.train;
    tc.beta = beta;
    tc.workers = workers;
    tc.seed = cfg.seed;
    auto result = train_a3c(bp, pool, tc, resume ? &*resume : nullptr, progress);
    meta["episodes"] = episode_offset + tc.episodes;
    fs::create_directories(run.dir);
    nn::save_checkpoint(run.checkpoint, make_a3c_checkpoint(result, meta.dump()));
    curve = std::move(result.curve);
    mode = sync_name(tc.sync_mode);
  }
  long long clamped = 0;
  long long steps = 0;
  for (auto& s : curve) {
    s.episode += episode_offset;
    clamped += s.clamped_steps;
    steps += cfg.env.steps_per_episode();
  }
  run.clamp_rate = steps > 0 ? static_cast<double>(clamped) / static_cast<double>(steps) : 0.0;
  write_curve(run.curve, metadata_header(cfg, mode), curve);
  log << fmt::format("train {}: {} episode rows, reward clamp rate {:.3f} -> {}\n", run.tag, curve.size(),
                     run.clamp_rate, run.dir.string());
  return run;
}

std::vector<TrainRun> cmd_train_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<TrainRun> runs;
  const std::vector<int> counts = cfg.agent == "dqn" ? std::vector<int>{1} : cfg.worker_counts;
  for (int w : counts) {
    for (double b : cfg.betas) {
      try {
        runs.push_back(cmd_train(cfg, b, w, log));
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("[{}] {}", run_tag(cfg.agent, b, w), e.what()));
      } catch (const CalibrationError&) {
        throw;
      } catch (const std::exception& e) {
        throw std::runtime_error(fmt::format("[{}] {}", run_tag(cfg.agent, b, w), e.what()));
      }
    }
  }
  return runs;
}

EvalTarget parse_target(const std::string& spec, const ExperimentConfig& cfg) {
  EvalTarget t;
  if (spec == "knative" || spec == "kube-cpu" || spec == "openfaas") {
    t.name = spec;
    t.baseline = baseline_by_name(spec);
    return t;
  }
  // Relative paths: as given, then under the output directory, then beside the config.
  fs::path p;
  for (const fs::path& c : {fs::path(spec), cfg.resolve(cfg.output_dir) / spec, cfg.resolve(spec)}) {
    const fs::path file = fs::is_directory(c) ? c / "checkpoint.bin" : c;
    if (fs::is_regular_file(file)) {
      p = file;
      break;
    }
  }
  if (p.empty()) {
    throw ConfigError(fmt::format("unknown target '{}' (not a baseline name or checkpoint path)", spec));
  }
  t.checkpoint = p;
  const auto ckpt = nn::load_checkpoint(p);
  try {
    t.name = json::parse(ckpt.metadata).value("tag", p.parent_path().filename().string());
  } catch (const json::exception&) {
    t.name = p.parent_path().filename().string();
  }
  return t;
}

EvalResult cmd_evaluate(const ExperimentConfig& cfg, const std::vector<EvalTarget>& targets,
                        const std::vector<std::string>& bands, std::ostream& log) {
  if (targets.empty()) throw ConfigError("evaluate: no targets given");
  const Resources res = load_resources(cfg);
  const fs::path cal_path = cfg.calibration_path();
  // Metrics do not depend on the reward, so evaluation runs without calibration
  // when none exists.
  const Calibration cal = fs::exists(cal_path) ? Calibration::load(cal_path) : Calibration{};
  const EnvBlueprint bp = make_blueprint(cfg, res, cal);

  std::vector<std::function<StepPolicy()>> factories;
  for (const auto& t : targets) {
    if (t.baseline) {
      const auto kind = *t.baseline;
      factories.push_back([kind, b = cfg.baselines] { return baseline_policy(kind, b); });
      continue;
    }
    auto ckpt = std::make_shared<nn::Checkpoint>(nn::load_checkpoint(*t.checkpoint));
    const bool is_dqn = std::any_of(ckpt->entries.begin(), ckpt->entries.end(),
                                    [](const auto& e) { return e.name == "q"; });
    const auto& entry = ckpt->at(is_dqn ? "q" : "actor");
    check_compatible(entry, bp.state_dim(), is_dqn ? kDqnActions : 3 * cfg.env.action_levels);
    if (is_dqn) {
      factories.push_back([entry] { return greedy_q_policy(entry.spec, entry.params); });
    } else {
      factories.push_back([entry] { return greedy_actor_policy(entry.spec, entry.params); });
    }
  }

  const fs::path dir = cfg.resolve(cfg.output_dir) / "eval";
  EvalResult result;
  result.summary_csv = dir / "summary.csv";
  result.episodes_csv = dir / "episodes.csv";
  result.improvements_csv = dir / "improvements.csv";
  const std::string header = metadata_header(cfg, "deterministic");
  auto episodes = open_out(result.episodes_csv);
  episodes << header << "target,band,workload,rart,rfr,cost,requests,drops\n";

  std::map<std::string, std::vector<WorkloadSpec>> sets;
  for (const auto& b : bands) {
    sets[b] = make_workload_set(cfg, res, band_by_name(b), cfg.workloads_per_band, WorkloadPurpose::Evaluation);
  }
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    for (const auto& b : bands) {
      const auto summaries = evaluate_policy(bp, sets[b], factories[ti], cfg.seed, worker_threads());
      EvalRow row;
      row.target = targets[ti].name;
      row.band = b;
      row.workloads = static_cast<int>(summaries.size());
      std::vector<double> rarts, rfrs, costs;
      for (std::size_t i = 0; i < summaries.size(); ++i) {
        const auto& s = summaries[i];
        if (std::isnan(s.rart)) {
          ++row.undefined_rart;
        } else {
          rarts.push_back(s.rart);
        }
        rfrs.push_back(s.rfr);
        costs.push_back(s.cost);
        episodes << fmt::format("{},{},{},{},{},{},{},{}\n", row.target, b, i, num(s.rart), num(s.rfr),
                                num(s.cost), s.requests, s.drops);
      }
      row.rart = mean_of(rarts);
      row.rfr = mean_of(rfrs);
      row.cost = mean_of(costs);
      result.rows.push_back(row);
    }
  }

  auto summary = open_out(result.summary_csv);
  summary << header << "target,band,workloads,rart,rfr,cost,undefined_rart\n";
  log << fmt::format("{:<22} {:<6} {:>10} {:>10} {:>12}\n", "target", "band", "RART", "RFR", "cost");
  for (const auto& r : result.rows) {
    summary << fmt::format("{},{},{},{},{},{},{}\n", r.target, r.band, r.workloads, num(r.rart), num(r.rfr),
                           num(r.cost), r.undefined_rart);
    log << fmt::format("{:<22} {:<6} {:>10.4f} {:>10.4f} {:>12.6f}\n", r.target, r.band, r.rart, r.rfr, r.cost);
  }

  auto improvements = open_out(result.improvements_csv);
  improvements << header << "agent,baseline,band,metric,agent_value,baseline_value,improvement\n";
  for (const auto& a : result.rows) {
    const auto& at = *std::find_if(targets.begin(), targets.end(), [&](const auto& t) { return t.name == a.target; });
    if (at.baseline) continue;
    for (const auto& b : result.rows) {
      const auto& bt = *std::find_if(targets.begin(), targets.end(), [&](const auto& t) { return t.name == b.target; });
      if (!bt.baseline || b.band != a.band) continue;
      const std::pair<const char*, std::pair<double, double>> metrics[] = {
          {"rart", {a.rart, b.rart}}, {"rfr", {a.rfr, b.rfr}}, {"cost", {a.cost, b.cost}}};
      for (const auto& [name, vals] : metrics) {
        const double imp = vals.second != 0.0 ? (vals.second - vals.first) / vals.second
                                              : std::numeric_limits<double>::quiet_NaN();
        improvements << fmt::format("{},{},{},{},{},{},{}\n", a.target, b.target, a.band, name, num(vals.first),
                                    num(vals.second), num(imp));
      }
    }
  }
  log << fmt::format("evaluate: {} rows -> {}\n", result.rows.size(), dir.string());
  return result;
}

std::vector<fs::path> cmd_report(const fs::path& run_dir, std::ostream& log) {
  const fs::path train_dir = run_dir / "train";
  const fs::path eval_summary = run_dir / "eval" / "summary.csv";
  std::vector<fs::path> curves;
  if (fs::is_directory(train_dir)) {
    for (const auto& e : fs::directory_iterator(train_dir)) {
      if (e.is_directory() && fs::exists(e.path() / "curve.csv")) curves.push_back(e.path() / "curve.csv");
    }
  }
  std::sort(curves.begin(), curves.end());
  const bool have_eval = fs::exists(eval_summary);
  if (curves.empty() && !have_eval) {
    throw std::runtime_error(fmt::format(
        "report: no artifacts under {}; expected {}/<run>/curve.csv and/or {}", run_dir.string(),
        train_dir.string(), eval_summary.string()));
  }
  std::vector<fs::path> written;
  const fs::path out_dir = run_dir / "report";
  if (!curves.empty()) {
    const fs::path path = out_dir / "curves.csv";
    auto out = open_out(path);
    out << "run,agent,beta,workers,episode,worker,reward,rfrt,rfr,cost,rart\n";
    std::size_t rows = 0;
    for (const auto& c : curves) {
      const std::string tag = c.parent_path().filename().string();
      std::vector<std::string> parts;
      boost::algorithm::split(parts, tag, boost::is_any_of("_"));
      const std::string agent = parts.size() == 3 ? parts[0] : "";
      const std::string beta = parts.size() == 3 && parts[1].size() > 1 ? parts[1].substr(1) : "";
      const std::string workers = parts.size() == 3 && parts[2].size() > 1 ? parts[2].substr(1) : "";
      const auto t = read_csv(c);
      const std::size_t cols[] = {t.col("episode", c), t.col("worker", c), t.col("reward", c),
                                  t.col("rfrt", c),    t.col("rfr", c),    t.col("cost", c),
                                  t.col("rart", c)};
      for (const auto& r : t.rows) {
        out << fmt::format("{},{},{},{}", tag, agent, beta, workers);
        for (std::size_t k : cols) out << ',' << r[k];
        out << '\n';
        ++rows;
      }
    }
    written.push_back(path);
    log << fmt::format("report: {} curve rows -> {}\n", rows, path.string());
  }
  if (have_eval) {
    const fs::path path = out_dir / "evaluation.csv";
    auto out = open_out(path);
    out << "target,band,metric,value\n";
    const auto t = read_csv(eval_summary);
    const auto target = t.col("target", eval_summary);
    const auto band = t.col("band", eval_summary);
    std::size_t rows = 0;
    for (const char* metric : {"rart", "rfr", "cost"}) {
      const auto m = t.col(metric, eval_summary);
      for (const auto& r : t.rows) {
        out << fmt::format("{},{},{},{}\n", r[target], r[band], metric, r[m]);
        ++rows;
      }
    }
    written.push_back(path);
    log << fmt::format("report: {} evaluation rows -> {}\n", rows, path.string());
  }
  return written;
}

SimulateResult cmd_simulate(const ExperimentConfig& cfg, BaselineKind kind, const std::string& band,
                            std::ostream& log) {
  ExperimentConfig c = cfg;
  c.env.sim.record_log = true;
  const Resources res = load_resources(c);
  const EnvBlueprint bp = make_blueprint(c, res, std::nullopt);
  const auto set = make_workload_set(c, res, band_by_name(band), 1, WorkloadPurpose::Evaluation);
  ServerlessEnv env = bp.make(c.env.beta);
  env.set_target_mode(TargetMode::HighestRfrt);
  SimulateResult r;
  r.summary = run_episode(env, set.front(), c.seed, baseline_policy(kind, c.baselines));
  const fs::path dir = c.resolve(c.output_dir) / "simulate";
  r.log_file = dir / fmt::format("{}_{}_events.csv", to_string(kind), band);
  r.metrics_file = dir / fmt::format("{}_{}_metrics.csv", to_string(kind), band);
  const std::string header = metadata_header(c, "deterministic");
  {
    auto out = open_out(r.log_file);
    out << header << "time,kind,request,pod,vm,function\n" << env.sim().log_text();
  }
  {
    auto out = open_out(r.metrics_file);
    out << header << "policy,band,rart,rfr,cost,mean_rfrt,requests,drops\n";
    out << fmt::format("{},{},{},{},{},{},{},{}\n", to_string(kind), band, num(r.summary.rart), num(r.summary.rfr),
                       num(r.summary.cost), num(r.summary.mean_rfrt), r.summary.requests, r.summary.drops);
  }
  log << fmt::format("simulate {} on {}: RART {:.4f} RFR {:.4f} cost {:.6f} ({} requests, {} events) -> {}\n",
                     to_string(kind), band, r.summary.rart, r.summary.rfr, r.summary.cost, r.summary.requests,
                     env.sim().log().size(), dir.string());
  return r;
}

}  // namespace autoscale
