#include "autoscale/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/core.h>
#include <json.hpp>

namespace autoscale {

void MetricsLedger::register_function(FunctionId fn, double standard_response_time) {
  functions_[fn].r0 = standard_response_time;
}

void MetricsLedger::register_application(AppId app) { apps_.try_emplace(app); }

const MetricsLedger::FunctionSeries& MetricsLedger::series(FunctionId fn) const {
  auto it = functions_.find(fn);
  if (it == functions_.end()) throw ConfigError(fmt::format("ledger: unknown function {}", fn));
  return it->second;
}

MetricsLedger::FunctionSeries& MetricsLedger::series(FunctionId fn) {
  auto it = functions_.find(fn);
  if (it == functions_.end()) throw ConfigError(fmt::format("ledger: unknown function {}", fn));
  return it->second;
}

void MetricsLedger::record_arrival(FunctionId fn, double t) {
  series(fn).arrivals.push_back(t);
  ++function_requests_;
}

void MetricsLedger::record_completion(FunctionId fn, double t, double response_time) {
  auto& s = series(fn);
  const double ratio = response_time / s.r0;
  s.resolutions.push_back({t, false, ratio});
  ++function_completions_;
  rfrt_sum_ += ratio;
}

void MetricsLedger::record_drop(FunctionId fn, double t) {
  series(fn).resolutions.push_back({t, true, 0.0});
  ++function_drops_;
}

void MetricsLedger::record_chain_completion(AppId app, double response_sum, double standard_sum) {
  auto& a = apps_[app];
  ++a.completed;
  a.ratio_sum += response_sum / standard_sum;
}

void MetricsLedger::record_chain_drop(AppId app) {
  ++apps_[app].dropped;
  ++chain_drops_;
}

void MetricsLedger::record_cost(double t, double cumulative_cost) {
  cost_points_.emplace_back(t, cumulative_cost);
}

double MetricsLedger::mean_rfrt() const {
  return function_completions_ == 0 ? 1.0 : rfrt_sum_ / static_cast<double>(function_completions_);
}

std::vector<FunctionId> MetricsLedger::functions() const {
  std::vector<FunctionId> out;
  for (const auto& [fn, _] : functions_) out.push_back(fn);
  return out;
}

WindowStats MetricsLedger::window(FunctionId fn, double t0, double t1) const {
  const auto& s = series(fn);
  WindowStats w;
  auto a0 = std::upper_bound(s.arrivals.begin(), s.arrivals.end(), t0);
  auto a1 = std::upper_bound(s.arrivals.begin(), s.arrivals.end(), t1);
  w.arrivals = static_cast<int>(a1 - a0);
  w.rate = t1 > t0 ? w.arrivals / (t1 - t0) : 0.0;

  auto by_time = [](double t, const Resolution& r) { return t < r.time; };
  auto r0 = std::upper_bound(s.resolutions.begin(), s.resolutions.end(), t0, by_time);
  auto r1 = std::upper_bound(s.resolutions.begin(), s.resolutions.end(), t1, by_time);
  double ratio_sum = 0.0;
  for (auto it = r0; it != r1; ++it) {
    if (it->dropped) {
      ++w.dropped;
    } else {
      ++w.completed;
      ratio_sum += it->ratio;
    }
  }
  w.rfrt = w.completed == 0 ? 1.0 : ratio_sum / w.completed;
  const int resolved = w.completed + w.dropped;
  w.rfr = resolved == 0 ? 0.0 : static_cast<double>(w.dropped) / resolved;
  return w;
}

double MetricsLedger::cost_at(double t) const {
  if (cost_points_.empty() || t <= cost_points_.front().first) return 0.0;
  auto it = std::upper_bound(cost_points_.begin(), cost_points_.end(), t,
                             [](double x, const auto& p) { return x < p.first; });
  if (it == cost_points_.end()) return cost_points_.back().second;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  if (hi.first <= lo.first) return hi.second;
  return lo.second + (hi.second - lo.second) * (t - lo.first) / (hi.first - lo.first);
}

double MetricsLedger::cost_between(double t0, double t1) const { return cost_at(t1) - cost_at(t0); }

double rfrt(const MetricsLedger& ledger, FunctionId fn, double t0, double t1) {
  return ledger.window(fn, t0, t1).rfrt;
}

double rart(const MetricsLedger& ledger) {
  double sum = 0.0;
  int apps = 0;
  for (const auto& [app, totals] : ledger.app_totals()) {
    if (totals.completed == 0) continue;
    sum += totals.ratio_sum / static_cast<double>(totals.completed);
    ++apps;
  }
  if (apps == 0) throw UndefinedMetricError("RART undefined: no completed application requests");
  return sum / apps;
}

double rfr(const MetricsLedger& ledger) {
  if (ledger.function_requests() == 0) return 0.0;
  return static_cast<double>(ledger.function_drops()) /
         static_cast<double>(ledger.function_requests());
}

double rfr(const MetricsLedger& ledger, FunctionId fn, double t0, double t1) {
  return ledger.window(fn, t0, t1).rfr;
}

double vm_cost(const MetricsLedger& ledger, double t0, double t1) {
  return ledger.cost_between(t0, t1);
}

double vm_cost_from_active_seconds(const std::vector<VmSpec>& vms,
                                   const std::vector<double>& active_seconds) {
  double cost = 0.0;
  for (std::size_t i = 0; i < vms.size(); ++i) cost += vms[i].unit_price * active_seconds[i] / 3600.0;
  return cost;
}

double objective(double rart_value, double rfr_value, double cost, double beta) {
  return beta * (rart_value + rfr_value) + (1.0 - beta) * cost;
}

double Calibration::Bounds::normalize(double v) const {
  return std::clamp((v - min) / (max - min), 0.0, 1.0);
}

void Calibration::validate() const {
  for (const auto* b : {&rfrt, &rfr, &cost}) {
    if (!(b->min < b->max)) throw CalibrationError("calibration bounds must satisfy min < max");
  }
}

void Calibration::save(const std::filesystem::path& path) const {
  nlohmann::json j = {
      {"rfrt", {{"min", rfrt.min}, {"max", rfrt.max}}},
      {"rfr", {{"min", rfr.min}, {"max", rfr.max}}},
      {"cost", {{"min", cost.min}, {"max", cost.max}}},
  };
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("{}: cannot write calibration", path.string()));
  out << j.dump(2) << '\n';
}

Calibration Calibration::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw CalibrationError(fmt::format(
        "{}: calibration file missing; run the `calibrate` command first", path.string()));
  }
  try {
    const auto j = nlohmann::json::parse(in);
    Calibration c;
    auto read = [&](const char* key, Bounds& b) {
      b.min = j.at(key).at("min").get<double>();
      b.max = j.at(key).at("max").get<double>();
    };
    read("rfrt", c.rfrt);
    read("rfr", c.rfr);
    read("cost", c.cost);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CalibrationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

double step_reward(const RewardSignals& signals, const Calibration& calibration, double beta) {
  const double r1 = 0.5 * (calibration.rfrt.normalize(signals.rfrt) +
                           calibration.rfr.normalize(signals.rfr));
  const double r2 = calibration.cost.normalize(signals.cost);
  return -(beta * r1 + (1.0 - beta) * r2);
}

void CalibrationBuilder::observe(const RewardSignals& s) {
  if (samples_ == 0) {
    rfrt_min_ = rfrt_max_ = s.rfrt;
    rfr_min_ = rfr_max_ = s.rfr;
    cost_min_ = cost_max_ = s.cost;
  } else {
    rfrt_min_ = std::min(rfrt_min_, s.rfrt);
    rfrt_max_ = std::max(rfrt_max_, s.rfrt);
    rfr_min_ = std::min(rfr_min_, s.rfr);
    rfr_max_ = std::max(rfr_max_, s.rfr);
    cost_min_ = std::min(cost_min_, s.cost);
    cost_max_ = std::max(cost_max_, s.cost);
  }
  ++samples_;
}

Calibration CalibrationBuilder::build() const {
  if (samples_ == 0) throw CalibrationError("calibration observed no steps");
  constexpr double kTiny = 1e-12;
  const bool rfrt_flat = rfrt_max_ - rfrt_min_ < kTiny;
  const bool rfr_flat = rfr_max_ - rfr_min_ < kTiny;
  const bool cost_flat = cost_max_ - cost_min_ < kTiny;
  if (rfrt_flat && rfr_flat && cost_flat) {
    throw CalibrationError("degenerate calibration: every channel has min == max (no traffic?)");
  }
  Calibration c;
  c.rfrt = rfrt_flat ? Calibration::Bounds{rfrt_min_, rfrt_min_ + 1.0}
                     : Calibration::Bounds{rfrt_min_, rfrt_max_};
  c.rfr = rfr_flat ? Calibration::Bounds{0.0, 1.0} : Calibration::Bounds{rfr_min_, rfr_max_};
  c.cost = cost_flat ? Calibration::Bounds{0.0, std::max(cost_max_, 1e-6)}
                     : Calibration::Bounds{cost_min_, cost_max_};
  if (c.cost.min >= c.cost.max) c.cost = {0.0, std::max(c.cost.max, 1e-6) * 2.0};
  return c;
}

}  // namespace autoscale
