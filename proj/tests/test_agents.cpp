#include <cmath>

#include <gtest/gtest.h>

#include "autoscale/dqn.hpp"
#include "oracles.hpp"

using namespace autoscale;

namespace {

EnvBlueprint small_blueprint(double duration = 30.0) {
  EnvBlueprint bp;
  bp.vms = desk_cluster();
  bp.profiles = bundled_profiles();
  bp.env.episode_duration = duration;
  Calibration c;
  c.rfrt = {1.0, 5.0};
  c.rfr = {0.0, 1.0};
  c.cost = {0.0, 0.002};
  bp.calibration = c;
  return bp;
}

std::vector<WorkloadSpec> small_pool(double duration = 30.0) {
  return {oracle::mixed_workload(duration, 1), oracle::mixed_workload(duration, 2),
          oracle::mixed_workload(duration, 3)};
}

TrainConfig small_train(int workers, int episodes) {
  TrainConfig c;
  c.workers = workers;
  c.episodes = episodes;
  c.hidden = {16, 16};
  c.lr = 1e-3;
  c.seed = 11;
  c.sync_mode = SyncMode::DeterministicRoundRobin;
  return c;
}

std::vector<double> state_of(double v, int dim = 44) { return std::vector<double>(static_cast<std::size_t>(dim), v); }

}  // namespace

TEST(Advantages, ZeroCriticGivesRewards) {
  const auto spec = nn::NetworkSpec::critic(44);
  const nn::Params zero(spec.param_count(), 0.0);
  std::vector<Transition> seg{{state_of(0.1), {}, -0.3, state_of(0.2), false},
                              {state_of(0.2), {}, -0.7, state_of(0.3), true}};
  const auto adv = compute_advantages(seg, spec, zero, 0.6);
  EXPECT_EQ(adv.advantage, (std::vector<double>{-0.3, -0.7}));
  EXPECT_EQ(adv.target, (std::vector<double>{-0.3, -0.7}));
}

TEST(Advantages, TerminalCutsBootstrap) {
  const auto spec = nn::NetworkSpec::critic(44, 3);
  const auto p = nn::init_params(spec);
  const auto s = state_of(0.4), s2 = state_of(0.9);
  const double v = nn::forward_critic(spec, p, s);
  const double v2 = nn::forward_critic(spec, p, s2);
  const auto terminal = compute_advantages({{s, {}, -0.5, s2, true}}, spec, p, 0.6);
  EXPECT_DOUBLE_EQ(terminal.advantage[0], -0.5 - v);
  const auto open = compute_advantages({{s, {}, -0.5, s2, false}}, spec, p, 0.6);
  EXPECT_DOUBLE_EQ(open.advantage[0], -0.5 + 0.6 * v2 - v);
  EXPECT_DOUBLE_EQ(open.target[0], -0.5 + 0.6 * v2);
}

TEST(Advantages, MyopicDiscount) {
  const auto spec = nn::NetworkSpec::critic(44, 4);
  const auto p = nn::init_params(spec);
  std::vector<Transition> seg;
  for (int i = 0; i < 4; ++i) seg.push_back({state_of(0.1 * i), {}, -0.1 * i, state_of(0.1 * i + 0.05), i == 3});
  const auto adv = compute_advantages(seg, spec, p, 0.0);
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(adv.advantage[i], -0.1 * i - nn::forward_critic(spec, p, seg[i].s));
  }
  EXPECT_THROW(compute_advantages({}, spec, p, 0.6), std::invalid_argument);
}

TEST(Selection, SeededSamplingIsReproducible) {
  const auto spec = nn::NetworkSpec::actor(44);
  const nn::Params zero(spec.param_count(), 0.0);
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(select_action(spec, zero, state_of(0.5), SelectMode::Sample, a),
              select_action(spec, zero, state_of(0.5), SelectMode::Sample, b));
  }
}

TEST(Selection, GreedyPicksDominantIndex) {
  std::vector<double> head(11, 0.001);
  head[3] = 0.99;
  std::mt19937_64 rng(1);
  const auto a = select_from_probs({head, head, head}, SelectMode::Greedy, rng);
  EXPECT_EQ(a, (ScalingAction{3, 3, 3}));
}

TEST(Selection, SampleFrequenciesWithinThreeSigma) {
  const std::vector<double> p{0.5, 0.3, 0.15, 0.05};
  std::mt19937_64 rng(2);
  const int n = 100000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_from_probs({p, p, p}, SelectMode::Sample, rng).a2)];
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double sigma = std::sqrt(n * p[k] * (1 - p[k]));
    EXPECT_NEAR(counts[k], n * p[k], 3 * sigma) << "index " << k;
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.update_interval = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(A3C, UpdateIntervalEqualToEpisodeGivesOneUpdate) {
  auto cfg = small_train(1, 3);
  const auto bp = small_blueprint();
  cfg.update_interval = bp.env.steps_per_episode();
  const auto r = train_a3c(bp, small_pool(), cfg);
  ASSERT_EQ(r.worker_updates.size(), 1u);
  EXPECT_EQ(r.worker_updates[0], 3u);
  EXPECT_EQ(r.actor->version(), 3u);
}

TEST(A3C, EveryStepUpdate) {
  auto cfg = small_train(1, 2);
  cfg.update_interval = 1;
  const auto bp = small_blueprint();
  const auto r = train_a3c(bp, small_pool(), cfg);
  EXPECT_EQ(r.worker_updates[0], 2u * static_cast<std::uint64_t>(bp.env.steps_per_episode()));
}

TEST(A3C, SingleEpisodeSingleRow) {
  const auto r = train_a3c(small_blueprint(), small_pool(), small_train(1, 1));
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.curve[0].episode, 0);
  EXPECT_EQ(r.curve[0].worker, 0);
}

TEST(A3C, RoundRobinIsDeterministic) {
  const auto bp = small_blueprint();
  const auto a = train_a3c(bp, small_pool(), small_train(3, 2));
  const auto b = train_a3c(bp, small_pool(), small_train(3, 2));
  ASSERT_EQ(a.curve.size(), 6u);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].reward, b.curve[i].reward);
    EXPECT_EQ(a.curve[i].cost, b.curve[i].cost);
  }
  EXPECT_EQ(a.actor->snapshot(), b.actor->snapshot());
  EXPECT_EQ(a.critic->snapshot(), b.critic->snapshot());
}

TEST(A3C, AsynchronousVersionCountsEveryWorkerUpdate) {
  auto cfg = small_train(3, 2);
  cfg.sync_mode = SyncMode::Asynchronous;
  cfg.update_interval = 1;
  int callbacks = 0;
  const auto r = train_a3c(small_blueprint(), small_pool(), cfg, nullptr, [&](const EpisodeStats&) { ++callbacks; });
  std::uint64_t total = 0;
  for (auto u : r.worker_updates) total += u;
  EXPECT_EQ(r.actor->version(), total);
  EXPECT_EQ(r.critic->version(), total);
  EXPECT_EQ(callbacks, 6);
  EXPECT_EQ(r.curve.size(), 6u);
  for (std::size_t i = 1; i < r.curve.size(); ++i) {
    const auto& p = r.curve[i - 1];
    const auto& q = r.curve[i];
    EXPECT_TRUE(p.episode < q.episode || (p.episode == q.episode && p.worker < q.worker));
  }
}

TEST(A3C, WorkerFailureNamesWorker) {
  std::vector<WorkloadSpec> pool = small_pool();
  for (auto& w : pool) {
    w.applications.push_back(oracle::app(99, {999}));
    w.rates[99] = {1};
  }
  try {
    train_a3c(small_blueprint(), pool, small_train(2, 1));
    FAIL() << "expected WorkerError";
  } catch (const WorkerError& e) {
    EXPECT_EQ(e.worker(), 0);
    EXPECT_NE(std::string(e.what()).find("worker 0"), std::string::npos);
  }
}

TEST(A3C, RequiresCalibration) {
  auto bp = small_blueprint();
  bp.calibration.reset();
  EXPECT_THROW(train_a3c(bp, small_pool(), small_train(1, 1)), CalibrationError);
}

TEST(A3C, ResumeContinuesVersionAndRejectsOtherShape) {
  const auto bp = small_blueprint();
  const auto first = train_a3c(bp, small_pool(), small_train(1, 2));
  const auto ckpt = make_a3c_checkpoint(first, "{}");
  const auto second = train_a3c(bp, small_pool(), small_train(1, 1), &ckpt);
  EXPECT_EQ(second.actor->version(), first.actor->version() + 1);
  auto other = small_train(1, 1);
  other.hidden = {8};
  EXPECT_THROW(train_a3c(bp, small_pool(), other, &ckpt), nn::ShapeError);
}

TEST(A3C, GreedyPolicyRunsEpisode) {
  const auto bp = small_blueprint();
  const auto r = train_a3c(bp, small_pool(), small_train(1, 1));
  auto env = bp.make(0.5);
  const auto s = run_episode(env, small_pool()[0], 3, greedy_actor_policy(r.actor->spec(), r.actor->snapshot()));
  EXPECT_EQ(s.steps, bp.env.steps_per_episode());
}

TEST(Dqn, CompoundEncoding) {
  EXPECT_EQ(decode_compound(0), (std::array<int, 3>{0, 0, 0}));
  EXPECT_EQ(decode_compound(63), (std::array<int, 3>{3, 3, 3}));
  EXPECT_EQ(compound_to_action(63), (ScalingAction{10, 10, 10}));
  EXPECT_EQ(compound_to_action(0), (ScalingAction{0, 0, 0}));
  for (int c = 0; c < kDqnActions; ++c) EXPECT_EQ(encode_compound(decode_compound(c)), c);
  EXPECT_EQ(compound_to_action(encode_compound({1, 2, 3})), (ScalingAction{3, 7, 10}));
  EXPECT_THROW(decode_compound(64), std::out_of_range);
}

TEST(Dqn, GreedyLowestIndexOnTies) {
  std::vector<double> q(64, 0.0);
  q[17] = 2.0;
  q[40] = 2.0;
  EXPECT_EQ(greedy_compound(q), 17);
}

TEST(Dqn, GreedyPolicyFollowsValueTable) {
  const auto bp = small_blueprint();
  nn::NetworkSpec spec{bp.state_dim(), {8}, {kDqnActions}, 0};
  nn::Params p(spec.param_count(), 0.0);
  p[p.size() - kDqnActions + 37] = 1.0;  // output bias of action 37
  auto env = bp.make(0.5);
  run_episode(env, small_pool()[0], 1, greedy_q_policy(spec, p));
  for (const auto& rec : env.trace()) EXPECT_EQ(rec.action, compound_to_action(37));
}

TEST(Dqn, EpsilonSchedule) {
  DqnConfig c;
  EXPECT_DOUBLE_EQ(c.epsilon(0, 1000), 1.0);
  EXPECT_DOUBLE_EQ(c.epsilon(250, 1000), 1.0 + (0.05 - 1.0) * 0.5);
  EXPECT_NEAR(c.epsilon(500, 1000), 0.05, 1e-12);
  EXPECT_NEAR(c.epsilon(900, 1000), 0.05, 1e-12);
}

TEST(Dqn, ReplayRingOverwritesOldest) {
  ReplayBuffer buf(3);
  std::mt19937_64 rng(1);
  EXPECT_THROW(buf.sample(1, rng), std::logic_error);
  for (int i = 0; i < 5; ++i) buf.push({{}, i, 0.0, {}, false});
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.at(0).action, 3);
  EXPECT_EQ(buf.at(1).action, 4);
  EXPECT_EQ(buf.at(2).action, 2);
  for (const auto* t : buf.sample(50, rng)) EXPECT_GE(t->action, 2);
}

TEST(Dqn, TrainsDeterministically) {
  DqnConfig c;
  c.episodes = 4;
  c.hidden = {16};
  c.batch_size = 4;
  c.target_refresh = 3;
  c.seed = 5;
  const auto bp = small_blueprint();
  const auto a = train_dqn(bp, small_pool(), c);
  const auto b = train_dqn(bp, small_pool(), c);
  ASSERT_EQ(a.curve.size(), 4u);
  const long long steps = 4LL * bp.env.steps_per_episode();
  EXPECT_EQ(a.updates, static_cast<std::uint64_t>(steps - c.batch_size + 1));
  EXPECT_EQ(a.q->snapshot(), b.q->snapshot());
  const auto ckpt = make_dqn_checkpoint(a, "{}");
  EXPECT_EQ(ckpt.at("q").version, a.updates);
}
