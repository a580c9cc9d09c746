#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace autoscale;

namespace {

/// `pods` warm pods of `pod_cpu` vCPU on one large VM, each loaded with
/// `per_pod` long-running requests of `req_cpu`.
Simulator loaded(int pods, double pod_cpu, double req_cpu, int per_pod, int max_replicas = 80) {
  SimConfig cfg;
  cfg.limits.max_replicas = max_replicas;
  Simulator sim({{oracle::vm(0, 128.0, 262144.0)},
                 {oracle::profile(1, req_cpu, 64.0, 9.0, 1.0, pod_cpu, 1024.0)},
                 {oracle::app(1, {1})}},
                cfg);
  for (int i = 0; i < pods; ++i) sim.create_pod(1, true);
  for (int i = 0; i < pods * per_pod; ++i) sim.schedule_arrival(0.001 * (i + 1), 1);
  sim.advance(0.5);
  return sim;
}

}  // namespace

TEST(EventQueue, OrdersByTimeThenInsertion) {
  EventQueue q;
  q.push(2.0, EventKind::ScalingTick, 1);
  q.push(1.0, EventKind::ScalingTick, 2);
  q.push(2.0, EventKind::ScalingTick, 3);
  q.push(1.0, EventKind::RewardObservation, 4);
  std::vector<long long> order;
  while (!q.empty()) order.push_back(q.pop().target);
  EXPECT_EQ(order, (std::vector<long long>{2, 4, 1, 3}));
}

TEST(Advance, EmptyQueueMovesClock) {
  Simulator sim(oracle::single_function_setup(), {});
  EXPECT_TRUE(sim.advance(10.0).empty());
  EXPECT_EQ(sim.now(), 10.0);
  EXPECT_THROW(sim.advance(5.0), std::invalid_argument);
  EXPECT_THROW(sim.schedule_arrival(1.0, 1), std::invalid_argument);
}

TEST(Advance, DispatchesInTimeOrder) {
  Simulator sim(oracle::single_function_setup(), {});
  sim.schedule_marker(2.0, EventKind::RewardObservation);
  sim.schedule_marker(1.0, EventKind::ScalingTick);
  const auto events = sim.advance(5.0);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].time, 1.0);
  EXPECT_EQ(events[0].kind, EventKind::ScalingTick);
  EXPECT_EQ(events[1].time, 2.0);
  EXPECT_TRUE(sim.idle());
}

TEST(Routing, UnknownApplicationIsConfigError) {
  Simulator sim(oracle::single_function_setup(), {});
  EXPECT_THROW(sim.schedule_arrival(1.0, 42), ConfigError);
  EXPECT_THROW(sim.pod_count(42), ConfigError);
}

TEST(Routing, RoundRobinAcrossReadyPods) {
  Simulator sim(oracle::single_function_setup(), {});
  const auto a = sim.create_pod(1, true);
  const auto b = sim.create_pod(1, true);
  for (double t : {0.1, 0.2, 0.3}) sim.schedule_arrival(t, 1);
  sim.advance(0.5);
  EXPECT_EQ(sim.request(0).pod_id, *a);
  EXPECT_EQ(sim.request(1).pod_id, *b);
  EXPECT_EQ(sim.request(2).pod_id, *a);
}

TEST(Routing, NoReadyPodQueuesWithRetry) {
  Simulator sim(oracle::single_function_setup(), {});
  sim.create_pod(1);  // still cold
  sim.schedule_arrival(0.0, 1);
  sim.advance(0.0);
  EXPECT_EQ(sim.request(0).status, RequestStatus::Queued);
  EXPECT_EQ(sim.request(0).retries, 1);
  EXPECT_EQ(sim.queued_count(1), 1);
  sim.advance(0.99);
  EXPECT_EQ(sim.request(0).retries, 1);
  sim.advance(1.0);
  EXPECT_EQ(sim.request(0).retries, 2);
}

TEST(Routing, ConcurrencyBoundIsFloorOfRatio) {
  // Pods of 0.5 vCPU serve floor(0.5 / 0.25) = 2 requests of 0.25 vCPU.
  Simulator sim(oracle::single_function_setup(), {});
  sim.create_pod(1, true);
  EXPECT_EQ(sim.max_concurrency(sim.pods().begin()->second), 2);
  for (double t : {0.1, 0.2, 0.3}) sim.schedule_arrival(t, 1);
  sim.advance(0.5);
  EXPECT_EQ(sim.request(0).status, RequestStatus::Running);
  EXPECT_EQ(sim.request(1).status, RequestStatus::Running);
  EXPECT_EQ(sim.request(2).status, RequestStatus::Queued);
}

TEST(Retry, CountIncrementsThenDropsAtBudget) {
  Simulator sim(oracle::single_function_setup(), {});
  sim.schedule_arrival(0.0, 1);
  sim.advance(2.0);
  EXPECT_EQ(sim.request(0).retries, 3);
  sim.advance(3.0);
  EXPECT_EQ(sim.request(0).retries, 4);
  EXPECT_EQ(sim.request(0).status, RequestStatus::Queued);
  sim.advance(9.0);
  EXPECT_EQ(sim.request(0).retries, 10);
  EXPECT_EQ(sim.request(0).status, RequestStatus::Queued);
  sim.advance(10.0);
  EXPECT_EQ(sim.request(0).status, RequestStatus::Dropped);
  EXPECT_DOUBLE_EQ(oracle::drop_time(sim.request(0), sim.config()), 10.0);
  EXPECT_EQ(sim.ledger().function_drops(), 1);
  EXPECT_FALSE(sim.drop_if_exhausted(0));  // already resolved
}

TEST(Retry, CustomBudget) {
  SimConfig cfg;
  cfg.retry_interval = 0.5;
  cfg.max_retries = 3;
  Simulator sim(oracle::single_function_setup(), cfg);
  sim.schedule_arrival(1.0, 1);
  sim.run_until_idle();
  ASSERT_EQ(sim.request(0).status, RequestStatus::Dropped);
  EXPECT_DOUBLE_EQ(sim.now(), 1.0 + 3 * 0.5);
}

TEST(Horizontal, WorkedExamples) {
  // M=4, C=0.8, T=0.4: min(8, 80) - 4.
  EXPECT_EQ(loaded(4, 0.5, 0.1, 4).horizontal_delta(1, 0.4), 4);
  // M=10, C=0.2, T=0.4: 5 - 10.
  EXPECT_EQ(loaded(10, 0.5, 0.1, 1).horizontal_delta(1, 0.4), -5);
  // M=60, C=0.9, T=0.5: min(108, 80) - 60.
  EXPECT_EQ(loaded(60, 1.0, 0.1, 9).horizontal_delta(1, 0.5), 20);
}

TEST(Horizontal, InvalidTarget) {
  auto sim = loaded(1, 0.5, 0.1, 0);
  EXPECT_THROW(sim.horizontal_delta(1, 0.0), std::invalid_argument);
  EXPECT_THROW(sim.horizontal_delta(1, -0.2), std::invalid_argument);
}

TEST(Horizontal, TableMatchesIntegerOracle) {
  for (const auto& c : oracle::horizontal_cases()) {
    auto sim = oracle::horizontal_fixture(c);
    EXPECT_EQ(sim.horizontal_delta(1, c.target_pct / 100.0), oracle::horizontal_oracle(c))
        << "pods " << c.pods << " in flight " << c.in_flight << " target " << c.target_pct;
    EXPECT_EQ(oracle::horizontal_oracle(c), c.expected_delta);
  }
}

TEST(Horizontal, FullClusterRecordsShortfall) {
  Simulator sim({{oracle::vm(0, 1.0, 4096)},
                 {oracle::profile(1, 0.25, 256, 1.0, 1.0, 0.5, 512)},
                 {oracle::app(1, {1})}},
                {});
  sim.apply_horizontal(1, 2);
  const auto r = sim.apply_horizontal(1, 2);
  EXPECT_TRUE(r.created.empty());
  EXPECT_EQ(r.shortfall, 2);
  EXPECT_EQ(sim.placement_shortfall(), 2);
  EXPECT_EQ(sim.pod_count(1), 2);
}

TEST(Horizontal, IdlePodsRemovedFirst) {
  Simulator sim(oracle::single_function_setup(), {});
  for (int i = 0; i < 3; ++i) sim.create_pod(1, true);
  sim.schedule_arrival(0.1, 1);  // lands on pod 0
  sim.advance(0.2);
  const auto r = sim.apply_horizontal(1, -3);
  EXPECT_EQ(r.removed, (std::vector<PodId>{2, 1}));
  EXPECT_EQ(r.draining, (std::vector<PodId>{0}));
  EXPECT_EQ(sim.pod_count(1), 0);
  EXPECT_EQ(sim.pods().at(0).phase, PodPhase::Terminating);
  sim.run_until_idle();
  EXPECT_EQ(sim.request(0).status, RequestStatus::Completed);
  EXPECT_TRUE(sim.pods().empty());
  EXPECT_EQ(sim.vms()[0].cpu_allocated, 0.0);
}

TEST(Placement, BestFitPicksTightestVm) {
  ClusterSetup setup{{oracle::vm(0, 2.0, 8192), oracle::vm(1, 0.6, 8192)},
                     {oracle::profile(1, 0.25, 256, 1.0, 1.0, 0.5, 512)},
                     {oracle::app(1, {1})}};
  Simulator sim(setup, {});
  const auto id = sim.create_pod(1);
  ASSERT_TRUE(id);
  EXPECT_EQ(sim.pods().at(*id).vm_id, 1);
  // The 0.6 VM is now too small; the next pod goes to the larger one.
  EXPECT_EQ(sim.pods().at(*sim.create_pod(1)).vm_id, 0);
}

TEST(Placement, TieGoesToLowestVmId) {
  ClusterSetup setup{{oracle::vm(3, 1.0, 4096), oracle::vm(1, 1.0, 4096)},
                     {oracle::profile(1, 0.25, 256, 1.0, 1.0, 0.5, 512)},
                     {oracle::app(1, {1})}};
  Simulator sim(setup, {});
  EXPECT_EQ(sim.pods().at(*sim.create_pod(1)).vm_id, 1);
}

TEST(Placement, MemoryAlsoConstrains) {
  ClusterSetup setup{{oracle::vm(0, 0.6, 256), oracle::vm(1, 2.0, 8192)},
                     {oracle::profile(1, 0.25, 256, 1.0, 1.0, 0.5, 512)},
                     {oracle::app(1, {1})}};
  Simulator sim(setup, {});
  EXPECT_EQ(sim.pods().at(*sim.create_pod(1)).vm_id, 1);
}

TEST(Vertical, CappedAtPodMaximum) {
  Simulator sim({{oracle::vm(0, 4.0, 8192)},
                 {oracle::profile(1, 0.1, 128, 1.0, 1.0, 0.9, 512)},
                 {oracle::app(1, {1})}},
                {});
  sim.create_pod(1, true);
  EXPECT_NEAR(sim.clamp_vertical(1, 0.3, 0.0).cpu, 0.1, 1e-12);
}

TEST(Vertical, FloorAtBusiestPodUsage) {
  auto sim = loaded(1, 0.5, 0.1, 4);
  EXPECT_EQ(sim.running_count(1), 4);
  EXPECT_NEAR(sim.clamp_vertical(1, -0.2, 0.0).cpu, -0.1, 1e-12);
}

TEST(Vertical, SharedHostFreeCapacitySplitsAcrossReplicas) {
  // Two 0.5 pods on a 1.3 VM leave 0.3 free: 2 * delta <= 0.3.
  Simulator sim({{oracle::vm(0, 1.3, 8192)},
                 {oracle::profile(1, 0.25, 256, 1.0, 1.0, 0.5, 512)},
                 {oracle::app(1, {1})}},
                {});
  sim.create_pod(1, true);
  sim.create_pod(1, true);
  const auto d = sim.clamp_vertical(1, 0.25, 0.0);
  EXPECT_NEAR(d.cpu, 0.15, 1e-12);
  const double free = 1.3 - 2 * 0.5;
  EXPECT_NEAR(d.cpu, std::floor(free / 2 / 0.05 + 1e-9) * 0.05, 1e-12);
}

TEST(Vertical, MemoryRoundedTowardZeroOnGrid) {
  Simulator sim(oracle::single_function_setup(), {});
  sim.create_pod(1, true);
  EXPECT_NEAR(sim.clamp_vertical(1, 0.0, 100.0).mem, 51.2, 1e-9);
  EXPECT_NEAR(sim.clamp_vertical(1, 0.0, -300.0).mem, -256.0, 1e-9);
  // 512 - 128 = 384 is the floor distance: 7 grid steps.
  EXPECT_NEAR(sim.clamp_vertical(1, 0.0, -1000.0).mem, -7 * 51.2, 1e-9);
}

TEST(Vertical, RandomizedConstraintProperty) {
  const auto check = oracle::vertical_property(2000, 99);
  EXPECT_EQ(check.violations, 0) << (check.notes.empty() ? "" : check.notes.front());
}

TEST(ApplyVertical, ZeroIsNoOp) {
  Simulator s(oracle::single_function_setup(), oracle::logged());
  s.create_pod(1, true);
  const auto before = s.log().size();
  s.apply_vertical(1, {0.0, 0.0});
  EXPECT_EQ(s.log().size(), before);
  EXPECT_EQ(s.pod_cpu(1), 0.5);
  EXPECT_EQ(s.vms()[0].cpu_allocated, 0.5);
}

TEST(ApplyVertical, EveryPodAndHostUpdated) {
  // Best fit fills the 2.0 VM with all three pods; the 4.0 VM stays empty.
  Simulator sim({{oracle::vm(0, 4.0, 8192), oracle::vm(1, 2.0, 8192)},
                 {oracle::profile(1, 0.25, 256, 1.0, 1.0, 0.5, 512)},
                 {oracle::app(1, {1})}},
                {});
  for (int i = 0; i < 3; ++i) sim.create_pod(1, true);
  ASSERT_NEAR(sim.vms()[1].cpu_allocated, 1.5, 1e-12);
  sim.apply_vertical(1, {0.1, 0.0});
  for (const auto& [id, p] : sim.pods()) EXPECT_NEAR(p.cpu_limit, 0.6, 1e-12);
  EXPECT_NEAR(sim.vms()[1].cpu_allocated, 1.5 + 3 * 0.1, 1e-12);
  EXPECT_EQ(sim.vms()[0].cpu_allocated, 0.0);
  EXPECT_NEAR(sim.pod_cpu(1), 0.6, 1e-12);
  EXPECT_NO_THROW(sim.check_invariants());
}

TEST(ApplyVertical, ResizeChangesHorizontalDecision) {
  // Four 0.5 pods with two 0.1 requests each: C = 0.4, so T = 0.4 holds.
  auto sim = loaded(4, 0.5, 0.1, 2);
  EXPECT_EQ(sim.horizontal_delta(1, 0.4), 0);
  sim.apply_vertical(1, sim.clamp_vertical(1, 0.5, 0.0));
  // Pods of 1.0: C = 0.2, desired ceil(4 * 0.2 / 0.4) = 2.
  EXPECT_NEAR(sim.avg_pod_cpu_util(1), 0.2, 1e-12);
  EXPECT_EQ(sim.horizontal_delta(1, 0.4), -2);
}

TEST(Snapshot, FreshClusterIsZero) {
  Simulator sim(oracle::single_function_setup({oracle::vm(0, 2, 8192), oracle::vm(1, 4, 8192)}), {});
  const auto snap = sim.snapshot(1, 10.0);
  ASSERT_EQ(snap.vms.size(), 2u);
  for (const auto& v : snap.vms) {
    EXPECT_EQ(v.cpu_util, 0.0);
    EXPECT_EQ(v.mem_util, 0.0);
    EXPECT_EQ(v.cpu_alloc, 0.0);
    EXPECT_EQ(v.mem_alloc, 0.0);
    EXPECT_EQ(v.replicas, 0);
  }
}

TEST(Snapshot, AllocationRatios) {
  Simulator sim({{oracle::vm(0, 2.0, 8192)},
                 {oracle::profile(1, 0.25, 256, 1.0, 1.0, 0.5, 2048)},
                 {oracle::app(1, {1})}},
                {});
  sim.create_pod(1, true);
  const auto snap = sim.snapshot(1, 10.0);
  EXPECT_DOUBLE_EQ(snap.vms[0].cpu_alloc, 0.25);
  EXPECT_DOUBLE_EQ(snap.vms[0].mem_alloc, 0.25);
  EXPECT_EQ(snap.vms[0].replicas, 1);
}

TEST(Snapshot, WindowedArrivalRate) {
  Simulator sim(oracle::single_function_setup(), {});
  for (int i = 0; i < 30; ++i) sim.schedule_arrival(10.0 + (i + 1) / 3.0, 1);
  sim.advance(20.0);
  EXPECT_NEAR(sim.snapshot(1, 10.0).functions.at(1).arrival_rate, 3.0, 1e-12);
}

TEST(Scenarios, MatchHandTraces) {
  for (const auto& s : oracle::all_scenarios()) {
    EXPECT_TRUE(s.matches()) << s.name;
    EXPECT_LE(s.scripted_inputs, 10) << s.name;
  }
}

TEST(Invariants, HoldUnderMixedLoad) {
  SimConfig cfg;
  cfg.execution_noise = true;
  cfg.seed = 3;
  ClusterSetup setup{desk_cluster(), bundled_profiles(), bundled_applications()};
  Simulator sim(setup, cfg);
  for (FunctionId fn : setup.deployed_functions()) sim.create_pod(fn, true);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick_app(1, 12);
  for (int i = 0; i < 600; ++i) sim.schedule_arrival(0.05 * i, pick_app(rng));
  for (double t = 5.0; t <= 60.0; t += 5.0) {
    sim.advance(t);
    for (FunctionId fn : setup.deployed_functions()) {
      sim.apply_vertical(fn, sim.clamp_vertical(fn, (fn % 3 - 1) * 0.1, (fn % 2 ? 51.2 : -51.2)));
      sim.apply_horizontal(fn, sim.horizontal_delta(fn, 0.5));
    }
    ASSERT_NO_THROW(sim.check_invariants()) << "t=" << t;
  }
  sim.run_until_idle();
  EXPECT_NO_THROW(sim.check_invariants());
}

TEST(Determinism, SameSeedSameLog) {
  auto run = [](std::uint64_t seed) {
    SimConfig cfg = oracle::logged();
    cfg.execution_noise = true;
    cfg.seed = seed;
    Simulator sim(oracle::single_function_setup(), cfg);
    sim.create_pod(1, true);
    sim.create_pod(1);
    for (int i = 0; i < 50; ++i) sim.schedule_arrival(0.2 * i, 1);
    sim.run_until_idle();
    return sim.log_text();
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(1), run(2));
}
