#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "autoscale/cluster.hpp"

namespace autoscale {

/// Raised when a metric is requested over an empty population (e.g. RART
/// with no completed application requests).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a reward is requested before normalization bounds exist.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Function-level statistics over a half-open window (t0, t1].
struct WindowStats {
  int arrivals = 0;
  int completed = 0;
  int dropped = 0;
  double rfrt = 1.0;  // neutral when nothing completed
  double rfr = 0.0;   // dropped / (completed + dropped)
  double rate = 0.0;  // arrivals per second
};

/// Append-only record of everything the metrics are computed from. The
/// simulator feeds it in event order, so every per-function series is sorted
/// by time.
class MetricsLedger {
 public:
  void register_function(FunctionId fn, double standard_response_time);
  void register_application(AppId app);

  void record_arrival(FunctionId fn, double t);
  void record_completion(FunctionId fn, double t, double response_time);
  void record_drop(FunctionId fn, double t);
  void record_chain_completion(AppId app, double response_sum, double standard_sum);
  void record_chain_drop(AppId app);
  /// Cumulative VM cost at time t; the cost rate is constant between points.
  void record_cost(double t, double cumulative_cost);

  WindowStats window(FunctionId fn, double t0, double t1) const;
  /// Cost accrued over (t0, t1].
  double cost_between(double t0, double t1) const;
  double total_cost() const { return cost_points_.empty() ? 0.0 : cost_points_.back().second; }

  long long function_requests() const { return function_requests_; }
  long long function_drops() const { return function_drops_; }
  long long function_completions() const { return function_completions_; }
  long long chain_drops() const { return chain_drops_; }
  /// Mean response_time / r0 over every completed function request.
  double mean_rfrt() const;

  struct AppTotals {
    long long completed = 0;
    long long dropped = 0;
    double ratio_sum = 0.0;  // sum of R_q / R_q0 over completed requests
  };
  const std::map<AppId, AppTotals>& app_totals() const { return apps_; }
  std::vector<FunctionId> functions() const;

 private:
  struct Resolution {
    double time;
    bool dropped;
    double ratio;
  };
  struct FunctionSeries {
    double r0 = 1.0;
    std::vector<double> arrivals;
    std::vector<Resolution> resolutions;
  };
  const FunctionSeries& series(FunctionId fn) const;
  FunctionSeries& series(FunctionId fn);
  double cost_at(double t) const;

  std::map<FunctionId, FunctionSeries> functions_;
  std::map<AppId, AppTotals> apps_;
  std::vector<std::pair<double, double>> cost_points_;
  long long function_requests_ = 0;
  long long function_drops_ = 0;
  long long function_completions_ = 0;
  long long chain_drops_ = 0;
  double rfrt_sum_ = 0.0;
};

/// Mean relative function response time of `fn` over (t0, t1]; 1.0 when empty.
double rfrt(const MetricsLedger& ledger, FunctionId fn, double t0, double t1);

/// Average relative application response time over completed application
/// requests: unweighted mean over applications of each application's mean
/// R_q / R_q0. Throws UndefinedMetricError when no application completed.
double rart(const MetricsLedger& ledger);

/// Dropped / received function requests for the whole episode; 0 when empty.
double rfr(const MetricsLedger& ledger);
/// Dropped / resolved requests of `fn` over (t0, t1]; 0 when empty.
double rfr(const MetricsLedger& ledger, FunctionId fn, double t0, double t1);

/// VM cost accrued over (t0, t1].
double vm_cost(const MetricsLedger& ledger, double t0, double t1);
double vm_cost_from_active_seconds(const std::vector<VmSpec>& vms,
                                   const std::vector<double>& active_seconds);

/// Blended evaluation objective beta * (RART + RFR) + (1 - beta) * cost.
double objective(double rart_value, double rfr_value, double cost, double beta);

/// Min/max bounds for the three reward channels.
struct Calibration {
  struct Bounds {
    double min = 0.0;
    double max = 1.0;
    double normalize(double v) const;
  };
  Bounds rfrt{1.0, 2.0};
  Bounds rfr{0.0, 1.0};
  Bounds cost{0.0, 1.0};

  void validate() const;
  void save(const std::filesystem::path& path) const;
  static Calibration load(const std::filesystem::path& path);
};

/// Raw (un-normalized) reward channels observed over one window.
struct RewardSignals {
  double rfrt = 1.0;  // mean over deployed functions
  double rfr = 0.0;   // mean over deployed functions
  double cost = 0.0;  // VM cost accrued in the window
};

/// Step reward in [-1, 0]:
/// -(beta * mean(rfrt_n, rfr_n) + (1 - beta) * cost_n), each channel clamped
/// min-max normalized.
double step_reward(const RewardSignals& signals, const Calibration& calibration, double beta);

/// Accumulates per-channel extrema across observed steps.
class CalibrationBuilder {
 public:
  void observe(const RewardSignals& s);
  std::size_t samples() const { return samples_; }
  /// Throws CalibrationError if every channel is degenerate.
  Calibration build() const;

 private:
  std::size_t samples_ = 0;
  double rfrt_min_ = 0, rfrt_max_ = 0, rfr_min_ = 0, rfr_max_ = 0, cost_min_ = 0, cost_max_ = 0;
};

}  // namespace autoscale
