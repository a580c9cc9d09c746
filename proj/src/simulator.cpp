#include "autoscale/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace autoscale {

namespace {

constexpr double kEps = 1e-9;

// Largest multiple of `step` not exceeding `magnitude` (tolerant of
// representation error at exact multiples).
double floor_to_grid(double magnitude, double step) {
  if (step <= 0.0) return magnitude;
  return std::floor(magnitude / step + kEps) * step;
}

}  // namespace

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::RequestArrival: return "RequestArrival";
    case EventKind::PodReady: return "PodReady";
    case EventKind::RequestFinish: return "RequestFinish";
    case EventKind::RetrySchedule: return "RetrySchedule";
    case EventKind::ScalingTick: return "ScalingTick";
    case EventKind::RewardObservation: return "RewardObservation";
  }
  return "?";
}

const char* to_string(PodPhase phase) {
  switch (phase) {
    case PodPhase::Creating: return "Creating";
    case PodPhase::Ready: return "Ready";
    case PodPhase::Terminating: return "Terminating";
  }
  return "?";
}

const char* to_string(RequestStatus status) {
  switch (status) {
    case RequestStatus::Queued: return "Queued";
    case RequestStatus::Running: return "Running";
    case RequestStatus::Completed: return "Completed";
    case RequestStatus::Dropped: return "Dropped";
  }
  return "?";
}

void EventQueue::push(double time, EventKind kind, long long target) {
  heap_.push(Event{time, next_seq_++, kind, target});
}

Event EventQueue::pop() {
  Event e = heap_.top();
  heap_.pop();
  return e;
}

std::string LogEntry::format() const {
  return fmt::format("{:.6f},{},{},{},{},{}", time, kind, request, pod, vm, function);
}

Simulator::Simulator(ClusterSetup setup, SimConfig config)
    : setup_(std::move(setup)), config_(config), rng_(config.seed) {
  setup_.validate(config_.limits);
  for (const auto& spec : setup_.vms) {
    vm_index_[spec.vm_id] = vms_.size();
    VmState state;
    state.spec = spec;
    vms_.push_back(std::move(state));
  }
  for (FunctionId fn : setup_.deployed_functions()) {
    FunctionRuntime rt;
    rt.profile = setup_.profile(fn);
    rt.pod_cpu = rt.profile.initial_pod_cpu;
    rt.pod_mem = rt.profile.initial_pod_mem;
    functions_.emplace(fn, std::move(rt));
    ledger_.register_function(fn, setup_.profile(fn).standard_response_time);
  }
  for (const auto& app : setup_.applications) ledger_.register_application(app.app_id);
  ledger_.record_cost(0.0, 0.0);
}

Simulator::FunctionRuntime& Simulator::runtime(FunctionId fn) {
  auto it = functions_.find(fn);
  if (it == functions_.end()) throw ConfigError(fmt::format("function {} is not deployed", fn));
  return it->second;
}

const Simulator::FunctionRuntime& Simulator::runtime(FunctionId fn) const {
  auto it = functions_.find(fn);
  if (it == functions_.end()) throw ConfigError(fmt::format("function {} is not deployed", fn));
  return it->second;
}

VmState& Simulator::vm(VmId id) { return vms_[vm_index_.at(id)]; }

void Simulator::schedule_arrival(double t, AppId app) {
  if (t < clock_) throw std::invalid_argument("arrival scheduled in the past");
  setup_.application(app);
  events_.push(t, EventKind::RequestArrival, app);
}

void Simulator::schedule_marker(double t, EventKind kind) {
  if (t < clock_) throw std::invalid_argument("marker scheduled in the past");
  events_.push(t, kind, -1);
}

double Simulator::cumulative_cost() const {
  double cost = 0.0;
  for (const auto& v : vms_) cost += v.spec.unit_price * v.active_seconds / 3600.0;
  return cost;
}

void Simulator::accrue_to(double t) {
  const double dt = t - clock_;
  if (dt <= 0.0) return;
  for (auto& v : vms_) {
    const bool active =
        config_.active_mode == ActiveTimeMode::InFlight ? v.running > 0 : !v.pods.empty();
    if (active) v.active_seconds += dt;
  }
  clock_ = t;
  ledger_.record_cost(t, cumulative_cost());
}

std::vector<Event> Simulator::advance(double until) {
  if (until < clock_ - kEps) throw std::invalid_argument("advance target precedes the clock");
  std::vector<Event> dispatched;
  while (!events_.empty() && events_.top().time <= until) {
    Event e = events_.pop();
    accrue_to(e.time);
    dispatch(e);
    dispatched.push_back(e);
  }
  accrue_to(until);
  clock_ = std::max(clock_, until);
  return dispatched;
}

std::vector<Event> Simulator::run_until_idle() {
  std::vector<Event> dispatched;
  while (!events_.empty()) {
    Event e = events_.pop();
    accrue_to(e.time);
    dispatch(e);
    dispatched.push_back(e);
  }
  return dispatched;
}

void Simulator::dispatch(const Event& e) {
  switch (e.kind) {
    case EventKind::RequestArrival: on_arrival(static_cast<AppId>(e.target)); break;
    case EventKind::PodReady: on_pod_ready(static_cast<PodId>(e.target)); break;
    case EventKind::RequestFinish: on_finish(e.target); break;
    case EventKind::RetrySchedule: on_retry(e.target); break;
    case EventKind::ScalingTick: log("tick", -1, -1, -1, -1); break;
    case EventKind::RewardObservation: log("observe", -1, -1, -1, -1); break;
  }
}

void Simulator::log(const std::string& kind, long long request, long long pod, long long vm_id,
                    long long fn) {
  if (config_.record_log) log_.push_back(LogEntry{clock_, kind, request, pod, vm_id, fn});
}

std::string Simulator::log_text() const {
  std::string out;
  for (const auto& e : log_) {
    out += e.format();
    out += '\n';
  }
  return out;
}

RequestId Simulator::new_request(AppId app, int chain_index, RequestId root, double response_sum,
                                 double standard_sum) {
  const auto& a = setup_.application(app);
  RequestRecord r;
  r.request_id = static_cast<RequestId>(requests_.size());
  r.root_id = root < 0 ? r.request_id : root;
  r.app_id = app;
  r.chain_index = chain_index;
  r.function_id = a.function_sequence.at(static_cast<std::size_t>(chain_index));
  r.arrival_time = clock_;
  r.chain_response_sum = response_sum;
  r.chain_standard_sum = standard_sum;
  runtime(r.function_id).queued += 1;
  ledger_.record_arrival(r.function_id, clock_);
  log("arrive", r.request_id, -1, -1, r.function_id);
  requests_.push_back(r);
  return r.request_id;
}

void Simulator::submit(RequestId id) {
  if (route_request(id).assigned) return;
  auto& r = requests_[static_cast<std::size_t>(id)];
  r.retries = 1;
  events_.push(clock_ + config_.retry_interval, EventKind::RetrySchedule, id);
  log("queue", id, -1, -1, r.function_id);
}

void Simulator::on_arrival(AppId app) {
  const RequestId id = new_request(app, 0, -1, 0.0, 0.0);
  submit(id);
}

RouteOutcome Simulator::route_request(RequestId id) {
  auto& r = requests_.at(static_cast<std::size_t>(id));
  if (r.status != RequestStatus::Queued) {
    throw std::logic_error(fmt::format("request {} is not queued", id));
  }
  auto& rt = runtime(r.function_id);

  auto eligible = [&](PodId pid) {
    const auto& p = pods_.at(pid);
    return p.phase == PodPhase::Ready &&
           static_cast<int>(p.in_flight.size()) < max_concurrency(p);
  };
  // Rotate from the pod after the last one assigned, wrapping around.
  std::optional<PodId> chosen;
  auto start = std::upper_bound(rt.pods.begin(), rt.pods.end(), rt.last_assigned);
  for (auto it = start; it != rt.pods.end() && !chosen; ++it) {
    if (eligible(*it)) chosen = *it;
  }
  for (auto it = rt.pods.begin(); it != start && !chosen; ++it) {
    if (eligible(*it)) chosen = *it;
  }
  if (!chosen) return {};

  auto& pod = pods_.at(*chosen);
  auto& host = vm(pod.vm_id);
  pod.in_flight.push_back(id);
  host.running += 1;
  host.cpu_used += rt.profile.req_cpu;
  host.mem_used += rt.profile.req_mem;
  rt.queued -= 1;
  rt.running += 1;
  rt.last_assigned = *chosen;
  r.status = RequestStatus::Running;
  r.start_time = clock_;
  r.pod_id = pod.pod_id;
  r.vm_id = pod.vm_id;

  double exec = rt.profile.standard_response_time;
  if (config_.execution_noise) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double s = config_.noise_sigma;
    exec *= std::exp(s * normal(rng_) - 0.5 * s * s);
  }
  events_.push(clock_ + exec, EventKind::RequestFinish, id);
  log("start", id, pod.pod_id, pod.vm_id, r.function_id);
  return {true, pod.pod_id};
}

bool Simulator::drop_if_exhausted(RequestId id) {
  auto& r = requests_.at(static_cast<std::size_t>(id));
  if (r.status != RequestStatus::Queued) return false;
  if (r.retries >= config_.max_retries) {
    drop(r);
    return true;
  }
  r.retries += 1;
  log("retry", id, -1, -1, r.function_id);
  if (!route_request(id).assigned) {
    events_.push(clock_ + config_.retry_interval, EventKind::RetrySchedule, id);
  }
  return false;
}

void Simulator::on_retry(RequestId id) { drop_if_exhausted(id); }

void Simulator::drop(RequestRecord& r) {
  r.status = RequestStatus::Dropped;
  runtime(r.function_id).queued -= 1;
  ledger_.record_drop(r.function_id, clock_);
  ledger_.record_chain_drop(r.app_id);
  log("drop", r.request_id, -1, -1, r.function_id);
}

void Simulator::on_finish(RequestId id) {
  auto& r = requests_.at(static_cast<std::size_t>(id));
  auto& rt = runtime(r.function_id);
  auto& pod = pods_.at(r.pod_id);
  auto& host = vm(pod.vm_id);
  pod.in_flight.erase(std::find(pod.in_flight.begin(), pod.in_flight.end(), id));
  host.running -= 1;
  host.cpu_used = 0.0;
  host.mem_used = 0.0;
  for (PodId pid : host.pods) {
    const auto& p = pods_.at(pid);
    const auto& prof = runtime(p.function_id).profile;
    host.cpu_used += static_cast<double>(p.in_flight.size()) * prof.req_cpu;
    host.mem_used += static_cast<double>(p.in_flight.size()) * prof.req_mem;
  }
  rt.running -= 1;
  r.status = RequestStatus::Completed;
  r.finish_time = clock_;
  const double response = r.response_time();
  ledger_.record_completion(r.function_id, clock_, response);
  log("finish", id, pod.pod_id, pod.vm_id, r.function_id);

  if (pod.phase == PodPhase::Terminating && pod.in_flight.empty()) remove_pod(pod.pod_id);

  const double response_sum = r.chain_response_sum + response;
  const double standard_sum = r.chain_standard_sum + rt.profile.standard_response_time;
  const auto& app = setup_.application(r.app_id);
  const int next = r.chain_index + 1;
  if (next < static_cast<int>(app.function_sequence.size())) {
    const AppId app_id = r.app_id;
    const RequestId root = r.root_id;
    const RequestId successor = new_request(app_id, next, root, response_sum, standard_sum);
    submit(successor);
  } else {
    ledger_.record_chain_completion(r.app_id, response_sum, standard_sum);
  }
}

void Simulator::on_pod_ready(PodId id) {
  auto it = pods_.find(id);
  if (it == pods_.end() || it->second.phase != PodPhase::Creating) return;
  it->second.phase = PodPhase::Ready;
  log("ready", -1, id, it->second.vm_id, it->second.function_id);
}

std::optional<VmId> Simulator::best_fit(double cpu, double mem) const {
  std::optional<VmId> best;
  double best_remaining = 0.0;
  for (const auto& v : vms_) {
    if (v.cpu_allocated + cpu > v.spec.cpu_capacity + kEps) continue;
    if (v.mem_allocated + mem > v.spec.mem_capacity + kEps) continue;
    const double remaining = v.spec.cpu_capacity - v.cpu_allocated - cpu;
    const bool better = !best || remaining < best_remaining - kEps ||
                        (std::abs(remaining - best_remaining) <= kEps && v.spec.vm_id < *best);
    if (better) {
      best = v.spec.vm_id;
      best_remaining = remaining;
    }
  }
  return best;
}

std::optional<PodId> Simulator::create_pod(FunctionId fn, bool warm) {
  auto& rt = runtime(fn);
  const auto host_id = best_fit(rt.pod_cpu, rt.pod_mem);
  if (!host_id) return std::nullopt;
  PodState p;
  p.pod_id = next_pod_id_++;
  p.function_id = fn;
  p.vm_id = *host_id;
  p.cpu_limit = rt.pod_cpu;
  p.mem_limit = rt.pod_mem;
  p.phase = warm ? PodPhase::Ready : PodPhase::Creating;
  p.ready_at = warm ? clock_ : clock_ + rt.profile.cold_start_seconds;
  auto& host = vm(*host_id);
  host.pods.push_back(p.pod_id);
  host.cpu_allocated += p.cpu_limit;
  host.mem_allocated += p.mem_limit;
  rt.pods.push_back(p.pod_id);
  log("create", -1, p.pod_id, p.vm_id, fn);
  if (warm) {
    log("ready", -1, p.pod_id, p.vm_id, fn);
  } else {
    events_.push(p.ready_at, EventKind::PodReady, p.pod_id);
  }
  const PodId id = p.pod_id;
  pods_.emplace(id, std::move(p));
  return id;
}

void Simulator::remove_pod(PodId id) {
  const auto it = pods_.find(id);
  const PodState& p = it->second;
  auto& host = vm(p.vm_id);
  host.pods.erase(std::find(host.pods.begin(), host.pods.end(), id));
  host.cpu_allocated = 0.0;
  host.mem_allocated = 0.0;
  for (PodId pid : host.pods) {
    host.cpu_allocated += pods_.at(pid).cpu_limit;
    host.mem_allocated += pods_.at(pid).mem_limit;
  }
  auto& rt = runtime(p.function_id);
  rt.pods.erase(std::find(rt.pods.begin(), rt.pods.end(), id));
  log("remove", -1, id, p.vm_id, p.function_id);
  pods_.erase(it);
}

int Simulator::horizontal_delta(FunctionId fn, double target_util) const {
  if (!(target_util > 0.0)) {
    throw std::invalid_argument(fmt::format("invalid action: target utilization {}", target_util));
  }
  const int current = pod_count(fn);
  const double util = avg_pod_cpu_util(fn);
  // With no pods but queued traffic the product is taken over one virtual
  // pod at full utilization, so the function can bootstrap.
  const int basis = current == 0 && queued_count(fn) > 0 ? 1 : current;
  const double desired = std::ceil(basis * util / target_util - kEps);
  const int capped = static_cast<int>(std::min(desired, double(config_.limits.max_replicas)));
  return std::max(capped, 0) - current;
}

HorizontalResult Simulator::apply_horizontal(FunctionId fn, int n_delta) {
  HorizontalResult result;
  if (n_delta > 0) {
    for (int i = 0; i < n_delta; ++i) {
      if (auto id = create_pod(fn)) {
        result.created.push_back(*id);
      } else {
        result.shortfall = n_delta - i;
        break;
      }
    }
    shortfall_total_ += result.shortfall;
  } else if (n_delta < 0) {
    std::vector<PodId> idle;
    std::vector<PodId> busy;
    for (PodId id : pods_of(fn)) {
      (pods_.at(id).in_flight.empty() ? idle : busy).push_back(id);
    }
    // Newest first.
    std::reverse(idle.begin(), idle.end());
    std::reverse(busy.begin(), busy.end());
    int remaining = -n_delta;
    for (PodId id : idle) {
      if (remaining == 0) break;
      remove_pod(id);
      result.removed.push_back(id);
      --remaining;
    }
    for (PodId id : busy) {
      if (remaining == 0) break;
      pods_.at(id).phase = PodPhase::Terminating;
      log("drain", -1, id, pods_.at(id).vm_id, fn);
      result.draining.push_back(id);
      --remaining;
    }
  }
  return result;
}

VerticalDelta Simulator::clamp_vertical(FunctionId fn, double cpu_delta, double mem_delta) const {
  const auto& rt = runtime(fn);
  const auto& lim = config_.limits;
  const auto live = pods_of(fn);

  // Replica count per hosting VM and the busiest pod's usage.
  std::map<VmId, int> per_vm;
  double max_cpu_used = 0.0;
  double max_mem_used = 0.0;
  for (PodId id : live) {
    const auto& p = pods_.at(id);
    per_vm[p.vm_id] += 1;
    const double n = static_cast<double>(p.in_flight.size());
    max_cpu_used = std::max(max_cpu_used, n * rt.profile.req_cpu);
    max_mem_used = std::max(max_mem_used, n * rt.profile.req_mem);
  }

  auto clamp_dim = [&](double current, double delta, double lo, double hi, double used,
                       double step, bool cpu) {
    if (delta == 0.0) return 0.0;
    double bound;
    if (delta > 0.0) {
      bound = hi - current;
      for (const auto& [vm_id, count] : per_vm) {
        const auto& v = vms_[vm_index_.at(vm_id)];
        const double free = cpu ? v.spec.cpu_capacity - v.cpu_allocated
                                : v.spec.mem_capacity - v.mem_allocated;
        bound = std::min(bound, free / count);
      }
    } else {
      bound = std::min(current - lo, current - used);
    }
    bound = std::max(bound, 0.0);
    const double magnitude = floor_to_grid(std::min(std::abs(delta), bound), step);
    return delta > 0.0 ? magnitude : -magnitude;
  };

  VerticalDelta out;
  out.cpu = clamp_dim(rt.pod_cpu, cpu_delta, lim.pod_cpu_min, lim.pod_cpu_max, max_cpu_used,
                      config_.cpu_grid_step, true);
  out.mem = clamp_dim(rt.pod_mem, mem_delta, lim.pod_mem_min, lim.pod_mem_max, max_mem_used,
                      config_.mem_grid_step, false);
  return out;
}

void Simulator::apply_vertical(FunctionId fn, VerticalDelta delta) {
  if (delta.cpu == 0.0 && delta.mem == 0.0) return;
  auto& rt = runtime(fn);
  const auto& lim = config_.limits;
  rt.pod_cpu = std::clamp(rt.pod_cpu + delta.cpu, lim.pod_cpu_min, lim.pod_cpu_max);
  rt.pod_mem = std::clamp(rt.pod_mem + delta.mem, lim.pod_mem_min, lim.pod_mem_max);
  for (PodId id : pods_of(fn)) {
    auto& p = pods_.at(id);
    auto& host = vm(p.vm_id);
    host.cpu_allocated += rt.pod_cpu - p.cpu_limit;
    host.mem_allocated += rt.pod_mem - p.mem_limit;
    p.cpu_limit = rt.pod_cpu;
    p.mem_limit = rt.pod_mem;
    const double n = static_cast<double>(p.in_flight.size());
    if (n * rt.profile.req_cpu > p.cpu_limit + kEps || n * rt.profile.req_mem > p.mem_limit + kEps) {
      throw SimulationError(fmt::format("resize of pod {} fell below its utilization", id));
    }
    if (host.cpu_allocated > host.spec.cpu_capacity + kEps ||
        host.mem_allocated > host.spec.mem_capacity + kEps) {
      throw SimulationError(fmt::format("resize of pod {} overcommits vm {}", id, p.vm_id));
    }
  }
  log("resize", -1, -1, -1, fn);
}

int Simulator::max_concurrency(const PodState& pod) const {
  const auto& prof = runtime(pod.function_id).profile;
  return static_cast<int>(
      std::floor(std::min(pod.cpu_limit / prof.req_cpu, pod.mem_limit / prof.req_mem) + kEps));
}

std::vector<PodId> Simulator::pods_of(FunctionId fn) const {
  std::vector<PodId> out;
  for (PodId id : runtime(fn).pods) {
    if (pods_.at(id).phase != PodPhase::Terminating) out.push_back(id);
  }
  return out;
}

int Simulator::pod_count(FunctionId fn) const { return static_cast<int>(pods_of(fn).size()); }

int Simulator::ready_pod_count(FunctionId fn) const {
  int n = 0;
  for (PodId id : runtime(fn).pods) n += pods_.at(id).phase == PodPhase::Ready;
  return n;
}

double Simulator::avg_pod_cpu_util(FunctionId fn) const {
  const auto live = pods_of(fn);
  if (live.empty()) return queued_count(fn) > 0 ? 1.0 : 0.0;
  const double req = runtime(fn).profile.req_cpu;
  double sum = 0.0;
  for (PodId id : live) {
    const auto& p = pods_.at(id);
    sum += static_cast<double>(p.in_flight.size()) * req / p.cpu_limit;
  }
  return sum / static_cast<double>(live.size());
}

double Simulator::avg_pod_mem_util(FunctionId fn) const {
  const auto live = pods_of(fn);
  if (live.empty()) return 0.0;
  const double req = runtime(fn).profile.req_mem;
  double sum = 0.0;
  for (PodId id : live) {
    const auto& p = pods_.at(id);
    sum += static_cast<double>(p.in_flight.size()) * req / p.mem_limit;
  }
  return sum / static_cast<double>(live.size());
}

int Simulator::queued_count(FunctionId fn) const { return runtime(fn).queued; }
int Simulator::running_count(FunctionId fn) const { return runtime(fn).running; }
double Simulator::pod_cpu(FunctionId fn) const { return runtime(fn).pod_cpu; }
double Simulator::pod_mem(FunctionId fn) const { return runtime(fn).pod_mem; }

ClusterSnapshot Simulator::snapshot(std::optional<FunctionId> replica_fn, double window) const {
  ClusterSnapshot snap;
  snap.time = clock_;
  for (const auto& v : vms_) {
    VmObservation o;
    o.cpu_util = v.cpu_used / v.spec.cpu_capacity;
    o.mem_util = v.mem_used / v.spec.mem_capacity;
    o.cpu_alloc = v.cpu_allocated / v.spec.cpu_capacity;
    o.mem_alloc = v.mem_allocated / v.spec.mem_capacity;
    o.cpu_capacity = v.spec.cpu_capacity;
    o.mem_capacity = v.spec.mem_capacity;
    if (replica_fn) {
      for (PodId id : v.pods) {
        const auto& p = pods_.at(id);
        o.replicas += p.function_id == *replica_fn && p.phase != PodPhase::Terminating;
      }
    }
    snap.vms.push_back(o);
  }
  for (const auto& [fn, rt] : functions_) {
    FunctionObservation f;
    f.function_id = fn;
    f.pod_cpu = rt.pod_cpu;
    f.pod_mem = rt.pod_mem;
    f.req_cpu = rt.profile.req_cpu;
    f.req_mem = rt.profile.req_mem;
    const auto w = ledger_.window(fn, clock_ - window, clock_);
    f.arrival_rate = w.rate;
    f.rfrt = w.rfrt;
    f.rfr = w.rfr;
    f.avg_pod_cpu_util = avg_pod_cpu_util(fn);
    f.avg_pod_mem_util = avg_pod_mem_util(fn);
    f.replicas = pod_count(fn);
    f.queued = rt.queued;
    f.running = rt.running;
    snap.functions.emplace(fn, f);
  }
  return snap;
}

void Simulator::check_invariants() const {
  const auto& lim = config_.limits;
  for (const auto& v : vms_) {
    double cpu = 0.0, mem = 0.0, cpu_used = 0.0, mem_used = 0.0;
    int running = 0;
    for (PodId id : v.pods) {
      const auto& p = pods_.at(id);
      const auto& prof = runtime(p.function_id).profile;
      cpu += p.cpu_limit;
      mem += p.mem_limit;
      cpu_used += static_cast<double>(p.in_flight.size()) * prof.req_cpu;
      mem_used += static_cast<double>(p.in_flight.size()) * prof.req_mem;
      running += static_cast<int>(p.in_flight.size());
      if (static_cast<int>(p.in_flight.size()) > max_concurrency(p)) {
        throw SimulationError(fmt::format("pod {} exceeds its concurrency bound", id));
      }
      if (p.phase == PodPhase::Creating && !p.in_flight.empty()) {
        throw SimulationError(fmt::format("creating pod {} serves requests", id));
      }
      if (p.cpu_limit < lim.pod_cpu_min - kEps || p.cpu_limit > lim.pod_cpu_max + kEps ||
          p.mem_limit < lim.pod_mem_min - kEps || p.mem_limit > lim.pod_mem_max + kEps) {
        throw SimulationError(fmt::format("pod {} limits out of bounds", id));
      }
    }
    if (std::abs(cpu - v.cpu_allocated) > 1e-6 || std::abs(mem - v.mem_allocated) > 1e-6) {
      throw SimulationError(fmt::format("vm {} allocation bookkeeping drifted", v.spec.vm_id));
    }
    if (cpu > v.spec.cpu_capacity + kEps || mem > v.spec.mem_capacity + kEps) {
      throw SimulationError(fmt::format("vm {} over-allocated", v.spec.vm_id));
    }
    if (cpu_used > cpu + kEps || mem_used > mem + kEps) {
      throw SimulationError(fmt::format("vm {} uses more than allocated", v.spec.vm_id));
    }
    if (running != v.running) {
      throw SimulationError(fmt::format("vm {} running count drifted", v.spec.vm_id));
    }
  }
  long long completed = 0, dropped = 0;
  for (const auto& r : requests_) {
    completed += r.status == RequestStatus::Completed;
    dropped += r.status == RequestStatus::Dropped;
  }
  if (ledger_.function_requests() != static_cast<long long>(requests_.size()) ||
      ledger_.function_completions() != completed || ledger_.function_drops() != dropped) {
    throw SimulationError("request accounting mismatch between records and ledger");
  }
  for (const auto& [fn, rt] : functions_) {
    int queued = 0, running = 0;
    for (const auto& r : requests_) {
      if (r.function_id != fn) continue;
      queued += r.status == RequestStatus::Queued;
      running += r.status == RequestStatus::Running;
    }
    if (queued != rt.queued || running != rt.running) {
      throw SimulationError(fmt::format("function {} queue bookkeeping drifted", fn));
    }
  }
}

}  // namespace autoscale
