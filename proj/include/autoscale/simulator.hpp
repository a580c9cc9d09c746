#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "autoscale/cluster.hpp"
#include "autoscale/metrics.hpp"

namespace autoscale {

enum class EventKind { RequestArrival, PodReady, RequestFinish, RetrySchedule, ScalingTick, RewardObservation };
const char* to_string(EventKind kind);

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::ScalingTick;
  long long target = -1;  // request id, pod id, or app id depending on kind
};

/// Min-heap on (time, insertion sequence): equal timestamps dispatch in
/// scheduling order.
class EventQueue {
 public:
  void push(double time, EventKind kind, long long target);
  bool empty() const { return heap_.empty(); }
  const Event& top() const { return heap_.top(); }
  Event pop();
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

enum class ActiveTimeMode {
  InFlight,    // VM accrues cost while at least one request executes on it
  HostingPod,  // VM accrues cost while it hosts at least one pod
};

struct SimConfig {
  ScalingLimits limits;
  double retry_interval = 1.0;
  int max_retries = 10;
  // Vertical deltas are rounded toward zero onto the action grid.
  double cpu_grid_step = 0.05;
  double mem_grid_step = 51.2;
  ActiveTimeMode active_mode = ActiveTimeMode::InFlight;
  bool execution_noise = false;  // lognormal execution-time noise
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  bool record_log = false;
};

enum class PodPhase { Creating, Ready, Terminating };
const char* to_string(PodPhase phase);

struct PodState {
  PodId pod_id = 0;
  FunctionId function_id = 0;
  VmId vm_id = 0;
  double cpu_limit = 0.0;
  double mem_limit = 0.0;
  PodPhase phase = PodPhase::Creating;
  double ready_at = 0.0;
  std::vector<RequestId> in_flight;
};

struct VmState {
  VmSpec spec;
  double cpu_allocated = 0.0;
  double mem_allocated = 0.0;
  double cpu_used = 0.0;
  double mem_used = 0.0;
  std::vector<PodId> pods;
  int running = 0;  // requests executing on this VM
  double active_seconds = 0.0;
};

enum class RequestStatus { Queued, Running, Completed, Dropped };
const char* to_string(RequestStatus status);

struct RequestRecord {
  RequestId request_id = 0;
  RequestId root_id = 0;  // id of the chain's first request
  AppId app_id = 0;
  int chain_index = 0;
  FunctionId function_id = 0;
  double arrival_time = 0.0;
  std::optional<double> start_time;
  std::optional<double> finish_time;
  RequestStatus status = RequestStatus::Queued;
  int retries = 0;
  PodId pod_id = -1;
  VmId vm_id = -1;
  double chain_response_sum = 0.0;  // over completed predecessors
  double chain_standard_sum = 0.0;

  double response_time() const { return *finish_time - arrival_time; }
};

/// One line of the event log. `kind` is a short verb; absent ids are -1.
struct LogEntry {
  double time = 0.0;
  std::string kind;
  long long request = -1;
  long long pod = -1;
  long long vm = -1;
  long long function = -1;

  std::string format() const;
};

struct RouteOutcome {
  bool assigned = false;
  PodId pod_id = -1;
};

struct HorizontalResult {
  std::vector<PodId> created;
  std::vector<PodId> removed;
  std::vector<PodId> draining;
  int shortfall = 0;
};

struct VerticalDelta {
  double cpu = 0.0;  // vCPU
  double mem = 0.0;  // MB
};

struct VmObservation {
  double cpu_util = 0.0;   // cpu_used / capacity
  double mem_util = 0.0;
  double cpu_alloc = 0.0;  // cpu_allocated / capacity
  double mem_alloc = 0.0;
  double cpu_capacity = 0.0;
  double mem_capacity = 0.0;
  int replicas = 0;  // pods of the observed function
};

struct FunctionObservation {
  FunctionId function_id = 0;
  double pod_cpu = 0.0;
  double pod_mem = 0.0;
  double req_cpu = 0.0;
  double req_mem = 0.0;
  double arrival_rate = 0.0;
  double rfrt = 1.0;
  double rfr = 0.0;
  double avg_pod_cpu_util = 0.0;
  double avg_pod_mem_util = 0.0;
  int replicas = 0;
  int queued = 0;
  int running = 0;
};

struct ClusterSnapshot {
  double time = 0.0;
  std::vector<VmObservation> vms;
  std::map<FunctionId, FunctionObservation> functions;
};

/// Discrete-event model of a serverless cluster: heterogeneous VMs, function
/// pods with cold starts, a round-robin load balancer with retry/drop, and
/// horizontal/vertical scaling executors. Single-threaded; movable.
class Simulator {
 public:
  Simulator(ClusterSetup setup, SimConfig config);

  double now() const { return clock_; }
  const ClusterSetup& setup() const { return setup_; }
  const SimConfig& config() const { return config_; }

  /// Schedules an application invocation at time t (>= now).
  void schedule_arrival(double t, AppId app);
  /// Schedules a marker event (ScalingTick / RewardObservation).
  void schedule_marker(double t, EventKind kind);

  /// Processes every event with timestamp <= until, then sets the clock to until.
  std::vector<Event> advance(double until);
  /// Runs until the event queue is empty.
  std::vector<Event> run_until_idle();
  bool idle() const { return events_.empty(); }

  // Load balancer.
  RouteOutcome route_request(RequestId id);
  bool drop_if_exhausted(RequestId id);

  // Horizontal scaling.
  int horizontal_delta(FunctionId fn, double target_util) const;
  HorizontalResult apply_horizontal(FunctionId fn, int n_delta);
  /// Places one pod of `fn` with the function's current size. Ready at
  /// now + cold start unless `warm`.
  std::optional<PodId> create_pod(FunctionId fn, bool warm = false);

  // Vertical scaling.
  VerticalDelta clamp_vertical(FunctionId fn, double cpu_delta, double mem_delta) const;
  void apply_vertical(FunctionId fn, VerticalDelta delta);

  ClusterSnapshot snapshot(std::optional<FunctionId> replica_fn, double window) const;

  // Per-function state.
  int pod_count(FunctionId fn) const;  // Creating + Ready
  int ready_pod_count(FunctionId fn) const;
  double avg_pod_cpu_util(FunctionId fn) const;  // C^k, with the bootstrap convention
  double avg_pod_mem_util(FunctionId fn) const;
  int queued_count(FunctionId fn) const;
  int running_count(FunctionId fn) const;
  double pod_cpu(FunctionId fn) const;  // current P_cpu for new pods
  double pod_mem(FunctionId fn) const;
  int max_concurrency(const PodState& pod) const;
  std::vector<PodId> pods_of(FunctionId fn) const;  // non-terminating, creation order

  const std::map<PodId, PodState>& pods() const { return pods_; }
  const std::vector<VmState>& vms() const { return vms_; }
  const std::vector<RequestRecord>& requests() const { return requests_; }
  const RequestRecord& request(RequestId id) const { return requests_.at(static_cast<std::size_t>(id)); }
  const MetricsLedger& ledger() const { return ledger_; }
  const std::vector<LogEntry>& log() const { return log_; }
  std::string log_text() const;

  double cumulative_cost() const;
  int placement_shortfall() const { return shortfall_total_; }

  /// Throws SimulationError if any conservation or bound invariant fails.
  void check_invariants() const;

 private:
  struct FunctionRuntime {
    FunctionProfile profile;
    double pod_cpu = 0.0;
    double pod_mem = 0.0;
    std::vector<PodId> pods;  // every live pod incl. terminating, ascending id
    PodId last_assigned = -1;
    int queued = 0;
    int running = 0;
  };

  FunctionRuntime& runtime(FunctionId fn);
  const FunctionRuntime& runtime(FunctionId fn) const;
  VmState& vm(VmId id);
  void accrue_to(double t);
  void dispatch(const Event& e);
  void on_arrival(AppId app);
  void on_finish(RequestId id);
  void on_retry(RequestId id);
  void on_pod_ready(PodId id);
  RequestId new_request(AppId app, int chain_index, RequestId root, double response_sum,
                        double standard_sum);
  void submit(RequestId id);
  void drop(RequestRecord& r);
  void remove_pod(PodId id);
  void log(const std::string& kind, long long request, long long pod, long long vm, long long fn);
  std::optional<VmId> best_fit(double cpu, double mem) const;

  ClusterSetup setup_;
  SimConfig config_;
  double clock_ = 0.0;
  EventQueue events_;
  std::vector<VmState> vms_;
  std::map<VmId, std::size_t> vm_index_;
  std::map<PodId, PodState> pods_;
  std::map<FunctionId, FunctionRuntime> functions_;
  std::vector<RequestRecord> requests_;
  MetricsLedger ledger_;
  std::vector<LogEntry> log_;
  PodId next_pod_id_ = 0;
  int shortfall_total_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace autoscale
