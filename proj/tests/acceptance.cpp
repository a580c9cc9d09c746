// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/core.h>

#include "autoscale/experiment.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace autoscale;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / fmt::format("autoscale_acceptance_{}", ::getpid()) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

EnvBlueprint desk_blueprint(std::optional<Calibration> cal, bool noise) {
  EnvConfig env;
  env.episode_duration = 60.0;
  env.sim.execution_noise = noise;
  return EnvBlueprint{desk_cluster(), bundled_profiles(), env, cal};
}

// 1. Horizontal formula table.
Outcome horizontal_table() {
  const auto t0 = Clock::now();
  int wrong = 0;
  std::string first;
  for (const auto& c : oracle::horizontal_cases()) {
    const int oracle_delta = oracle::horizontal_oracle(c);
    Simulator sim = oracle::horizontal_fixture(c);
    const int got = sim.horizontal_delta(1, c.target_pct / 100.0);
    if (got != c.expected_delta || oracle_delta != c.expected_delta) {
      if (wrong++ == 0) {
        first = fmt::format(" first mismatch M={} N={} T={}%: table {} oracle {} got {}", c.pods, c.in_flight,
                            c.target_pct, c.expected_delta, oracle_delta, got);
      }
    }
  }
  const double dt = seconds_since(t0);
  return {wrong == 0 && dt < 1.0,
          fmt::format("{} cases, {} mismatches, {:.3f} s (limit 1 s){}", oracle::horizontal_cases().size(), wrong, dt,
                      first)};
}

// 2. Vertical clamp property test.
Outcome vertical_constraints() {
  const auto t0 = Clock::now();
  const auto r = oracle::vertical_property(10000, 20240611);
  const double dt = seconds_since(t0);
  std::string notes;
  for (const auto& n : r.notes) notes += " [" + n + "]";
  return {r.violations == 0 && dt < 10.0,
          fmt::format("{} cases, {} violations, {:.2f} s (limit 10 s){}", r.cases, r.violations, dt, notes)};
}

// 3. Scripted simulator scenarios.
Outcome scripted_scenarios() {
  int ok = 0;
  std::string detail;
  const auto all = oracle::all_scenarios();
  for (const auto& s : all) {
    const bool match = s.matches() && s.scripted_inputs <= 10;
    ok += match;
    detail += fmt::format(" {}:{}", s.name, match ? "ok" : "MISMATCH");
  }
  return {ok == static_cast<int>(all.size()), fmt::format("{}/{} scenarios match;{}", ok, all.size(), detail)};
}

// 4. Streaming metrics against a brute-force pass over the request table.
Outcome metric_identities() {
  constexpr double kTol = 1e-9;
  double worst = 0.0;
  int episodes = 0;
  int windows = 0;
  auto note = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int run = 0; run < 6; ++run) {
    const bool noise = run % 2 == 1;
    ServerlessEnv env = desk_blueprint(Calibration{}, noise).make(0.5);
    const auto workload = oracle::mixed_workload(60.0, 100 + static_cast<std::uint64_t>(run));
    std::mt19937_64 rng(static_cast<std::uint64_t>(run));
    env.reset(workload, static_cast<std::uint64_t>(run));
    while (!env.done()) {
      if (run < 3) {
        env.step(oracle::random_action(rng));
      } else {
        env.step_with([&](Simulator& sim) { apply_baseline(BaselineKind::KubeCpu, {}, sim, 10.0); });
      }
    }
    const auto& sim = env.sim();
    const auto brute = oracle::brute_metrics(sim);
    const auto s = env.summary();
    if (brute.rart_defined == std::isnan(s.rart)) return {false, "RART definedness differs"};
    if (brute.rart_defined) note(brute.rart, s.rart);
    note(brute.rfr, s.rfr);
    note(brute.cost, s.cost);
    note(brute.mean_rfrt, s.mean_rfrt);
    note(static_cast<double>(brute.requests), static_cast<double>(s.requests));
    note(static_cast<double>(brute.drops), static_cast<double>(s.drops));
    const auto fns = sim.setup().deployed_functions();
    for (const auto& rec : env.trace()) {
      const double t1 = rec.time + env.config().observe_delay;
      double rfrt_sum = 0.0, rfr_sum = 0.0;
      for (FunctionId fn : fns) {
        const auto w = oracle::brute_window(sim, fn, rec.time, t1);
        rfrt_sum += w.rfrt;
        rfr_sum += w.rfr;
      }
      note(rfrt_sum / static_cast<double>(fns.size()), rec.signals.rfrt);
      note(rfr_sum / static_cast<double>(fns.size()), rec.signals.rfr);
      note(oracle::brute_cost(sim, rec.time, t1), rec.signals.cost);
      ++windows;
    }
    ++episodes;
  }
  return {worst <= kTol, fmt::format("{} episodes, {} reward windows, max |diff| {:.3g} (tolerance 1e-9)", episodes,
                                     windows, worst)};
}

// 5. Finite-difference gradient checks.
Outcome gradient_checks() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const int dim = 7 * 5 + 9;
  int checked = 0, failures = 0, skipped = 0;
  double worst = 0.0;
  for (int b = 0; b < 10; ++b) {
    const auto actor = nn::NetworkSpec::actor(dim, 11, 100 + static_cast<std::uint64_t>(b));
    const auto critic = nn::NetworkSpec::critic(dim, 200 + static_cast<std::uint64_t>(b));
    auto pa = nn::init_params(actor);
    auto pc = nn::init_params(critic);
    for (double& p : pa) p += noise(rng);
    for (double& p : pc) p += noise(rng);
    std::vector<nn::ActorSample> abatch;
    std::vector<nn::CriticSample> cbatch;
    std::vector<std::vector<double>> states;
    std::uniform_int_distribution<int> idx(0, 10);
    for (int i = 0; i < 8; ++i) {
      std::vector<double> s(dim);
      for (double& x : s) x = unit(rng);
      abatch.push_back({s, {idx(rng), idx(rng), idx(rng)}, 2.0 * unit(rng) - 1.0});
      cbatch.push_back({s, -unit(rng)});
      states.push_back(s);
    }
    const double beta_h = 0.01;
    const auto ga = nn::actor_gradient(actor, pa, abatch, beta_h);
    const auto ra = oracle::check_gradient(
        actor, pa, ga, [&](const nn::Params& p) { return nn::actor_objective(actor, p, abatch, beta_h); }, states,
        rng);
    const auto gc = nn::critic_gradient(critic, pc, cbatch);
    const auto rc = oracle::check_gradient(
        critic, pc, gc, [&](const nn::Params& p) { return nn::critic_loss(critic, p, cbatch); }, states, rng);
    checked += ra.checked + rc.checked;
    failures += ra.failures + rc.failures;
    skipped += ra.skipped + rc.skipped;
    worst = std::max({worst, ra.max_rel, rc.max_rel});
  }
  const double dt = seconds_since(t0);
  return {failures == 0 && dt < 30.0,
          fmt::format("10 batches, {} parameters checked ({} skipped at ReLU kinks), {} above 1e-4, max rel err "
                      "{:.3g}, {:.1f} s (limit 30 s)",
                      checked, skipped, failures, worst, dt)};
}

// 6. Reward range and channel separation.
Outcome reward_bounds() {
  // Deliberately narrow bounds so every channel is regularly clamped.
  Calibration base;
  base.rfrt = {1.0, 1.5};
  base.rfr = {0.0, 0.1};
  base.cost = {0.0, 0.0005};
  auto run = [&](double beta, const Calibration& cal, std::uint64_t seed) {
    ServerlessEnv env = desk_blueprint(cal, true).make(beta);
    std::mt19937_64 rng(seed);
    env.reset(oracle::mixed_workload(60.0, seed), seed);
    std::vector<double> rewards;
    while (!env.done()) rewards.push_back(env.step(oracle::random_action(rng)).reward);
    return rewards;
  };
  int steps = 0, out_of_range = 0, beta1_changed = 0, beta0_changed = 0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    for (double beta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      for (double r : run(beta, base, seed)) {
        ++steps;
        out_of_range += r < -1.0 || r > 0.0;
      }
    }
    Calibration cost_moved = base;
    cost_moved.cost = {0.0001, 0.05};
    beta1_changed += run(1.0, base, seed) != run(1.0, cost_moved, seed);
    Calibration perf_moved = base;
    perf_moved.rfrt = {1.2, 9.0};
    perf_moved.rfr = {0.05, 0.9};
    beta0_changed += run(0.0, base, seed) != run(0.0, perf_moved, seed);
  }
  return {out_of_range == 0 && beta1_changed == 0 && beta0_changed == 0,
          fmt::format("{} steps, {} outside [-1, 0]; beta=1 runs changed by cost bounds: {}; beta=0 runs changed "
                      "by performance bounds: {}",
                      steps, out_of_range, beta1_changed, beta0_changed)};
}

// 7. Learning smoke test on a stationary single-function workload.
Outcome learning_smoke() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = preset_config("desk");
  cfg.seed = 1;
  cfg.output_dir = scratch_dir("smoke");
  std::ostringstream log;
  const Calibration cal = cmd_calibrate(cfg, log);
  const Resources res = load_resources(cfg);
  const auto float_app = bundled_applications()[1];  // app 2: a single function
  const auto workload = make_constant_workload({float_app}, 10, cfg.env.episode_duration);
  const EnvBlueprint bp = make_blueprint(cfg, res, cal);
  TrainConfig tc = cfg.train;
  tc.workers = 1;
  tc.episodes = 300;
  tc.beta = 1.0;
  tc.seed = 1;
  tc.sync_mode = SyncMode::DeterministicRoundRobin;
  const auto result = train_a3c(bp, {workload}, tc);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 20; ++i) {
    first += result.curve[static_cast<std::size_t>(i)].reward / 20.0;
    last += result.curve[static_cast<std::size_t>(280 + i)].reward / 20.0;
  }
  const double improvement = (last - first) / -first;
  const double dt = seconds_since(t0);
  return {first < 0.0 && improvement >= 0.20 && dt < 900.0,
          fmt::format("seed 1, lr {}: first-20 mean {:.4f}, last-20 mean {:.4f}, closed {:.1f}% of the gap "
                      "(need 20%), {:.1f} s",
                      tc.lr, first, last, 100.0 * improvement, dt)};
}

// 8. Beta ordering on held-out mid-band workloads.
Outcome beta_ordering() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = preset_config("desk");
  cfg.seed = 1;
  cfg.output_dir = scratch_dir("beta");
  cfg.train.sync_mode = SyncMode::DeterministicRoundRobin;
  std::ostringstream log;
  cmd_calibrate(cfg, log);
  const auto perf = cmd_train(cfg, 1.0, 3, log);
  const auto cost = cmd_train(cfg, 0.0, 3, log);
  const auto eval = cmd_evaluate(cfg, {parse_target(perf.checkpoint.string(), cfg), parse_target(cost.checkpoint.string(), cfg)},
                                 {"mid"}, log);
  const auto& b1 = eval.rows.at(0);
  const auto& b0 = eval.rows.at(1);
  const bool ok = b1.rart < b0.rart && b1.rfr < b0.rfr && b0.cost < b1.cost;
  return {ok && seconds_since(t0) < 7200.0,
          fmt::format("beta=1: RART {:.4f} RFR {:.4f} cost {:.6f} | beta=0: RART {:.4f} RFR {:.4f} cost {:.6f} | "
                      "{} workloads, {:.1f} s",
                      b1.rart, b1.rfr, b1.cost, b0.rart, b0.rfr, b0.cost, b1.workloads, seconds_since(t0))};
}

// 9. Baseline trajectories on a scripted step load.
Outcome baseline_step_load() {
  int ok = 0;
  std::string detail;
  for (auto kind : all_baselines()) {
    const auto a = oracle::run_step_load(kind);
    const auto b = oracle::run_step_load(kind);
    const bool match = a.replicas == oracle::expected_step_load(kind) &&
                       a.drops == oracle::expected_step_load_drops(kind) && a.log == b.log &&
                       a.replicas == b.replicas;
    ok += match;
    std::string traj;
    for (int r : a.replicas) traj += std::to_string(r) + " ";
    detail += fmt::format(" {}: [{}] {};", to_string(kind), traj.substr(0, traj.size() - 1), match ? "ok" : "MISMATCH");
  }
  return {ok == 3, fmt::format("{}/3 trajectories match and rerun identically;{}", ok, detail)};
}

// 10. Byte-identical CSV outputs across reruns.
std::map<std::string, std::string> snapshot_outputs(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::string text, line;
    while (std::getline(in, line)) {
      if (is_timestamp_line(line)) continue;
      text += line + '\n';
    }
    out[fs::relative(e.path(), root).string()] = text;
  }
  return out;
}

Outcome determinism() {
  ExperimentConfig cfg = preset_config("desk");
  cfg.output_dir = scratch_dir("determinism");
  cfg.train.sync_mode = SyncMode::DeterministicRoundRobin;
  cfg.train.episodes = 6;
  cfg.dqn.episodes = 6;
  cfg.train_workloads = 4;
  cfg.workloads_per_band = 3;
  cfg.calibration_workloads = 3;
  cfg.betas = {0.0, 1.0};
  auto run_all = [&] {
    std::ostringstream log;
    cmd_calibrate(cfg, log);
    cmd_train_sweep(cfg, log);
    ExperimentConfig dqn = cfg;
    dqn.agent = "dqn";
    cmd_train(dqn, 0.5, 1, log);
    std::vector<EvalTarget> targets;
    for (const char* b : {"knative", "kube-cpu", "openfaas"}) targets.push_back(parse_target(b, cfg));
    for (const char* run : {"train/a3c_b0.00_w3", "train/a3c_b1.00_w3", "train/dqn_b0.50_w1"}) {
      targets.push_back(parse_target((cfg.output_dir / run).string(), cfg));
    }
    cmd_evaluate(cfg, targets, cfg.eval_bands, log);
    cmd_simulate(cfg, BaselineKind::OpenFaas, "high", log);
    cmd_report(cfg.output_dir, log);
    return snapshot_outputs(cfg.output_dir);
  };
  const auto first = run_all();
  const auto second = run_all();
  int csvs = 0, differing = 0;
  std::string which;
  for (const auto& [name, text] : first) {
    csvs += name.ends_with(".csv");
    auto it = second.find(name);
    if (it == second.end() || it->second != text) {
      ++differing;
      which += " " + name;
    }
  }
  const bool ok = differing == 0 && first.size() == second.size() && csvs > 0;
  return {ok, fmt::format("{} files ({} CSV) compared after a rerun, {} differ{}", first.size(), csvs, differing, which)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"horizontal scaling table", horizontal_table},
      {"vertical scaling constraints", vertical_constraints},
      {"simulator event-log oracles", scripted_scenarios},
      {"metric identities", metric_identities},
      {"gradient checks", gradient_checks},
      {"reward bounds and channel separation", reward_bounds},
      {"learning smoke test", learning_smoke},
      {"beta ordering on the mid band", beta_ordering},
      {"baseline step-load trajectories", baseline_step_load},
      {"rerun determinism", determinism},
  };
  int failed = 0;
  int n = 0;
  for (const auto& c : criteria) {
    ++n;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << fmt::format("{} {:>2} {}: {}", o.pass ? "PASS" : "FAIL", n, c.name, o.detail) << std::endl;
  }
  fs::remove_all(fs::temp_directory_path() / fmt::format("autoscale_acceptance_{}", ::getpid()));
  std::cout << fmt::format("{} of {} criteria passed\n", n - failed, n);
  return failed == 0 ? 0 : 1;
}
