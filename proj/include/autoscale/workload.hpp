#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "autoscale/cluster.hpp"

namespace autoscale {

/// Raised for malformed trace input; carries the 1-based line number.
class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

/// Per-minute invocation counts of one function. Each minute's count is
/// replayed as the request rate (req/s) of one second of the workload.
struct TraceSeries {
  std::string trace_id;
  std::vector<int> counts;

  int max_rate() const;
  int rate_at(int second) const;  // wraps around the series
};

struct RateBand {
  std::string name;
  double min_rate = 0.0;  // aggregate req/s
  double max_rate = 0.0;
};

RateBand training_band();  // 10-60
std::vector<RateBand> evaluation_bands();  // low 5-20, mid 20-40, high 40-60
RateBand band_by_name(const std::string& name);

enum class ArrivalModel {
  Uniform,  // evenly spaced inside each second
  Poisson,  // exponential gaps at the second's rate
};

struct WorkloadSpec {
  double duration = 300.0;
  std::vector<Application> applications;
  /// Per-second request rates of each application's entry function.
  std::map<AppId, std::vector<int>> rates;
  ArrivalModel model = ArrivalModel::Uniform;
  std::uint64_t seed = 0;
  std::string band;  // tag only
  int max_entry_functions = 0;  // 0 = unlimited; training workloads use 4
};

struct Arrival {
  double time = 0.0;
  AppId app_id = 0;
};

/// Reads `trace_id, c1 c2 ... cn` lines. Blank lines and lines starting with
/// '#' are skipped.
std::vector<TraceSeries> load_traces(const std::filesystem::path& path);
std::vector<TraceSeries> parse_traces(std::istream& in, const std::string& source = "<stream>");
void save_traces(const std::filesystem::path& path, const std::vector<TraceSeries>& traces);

/// Series whose peak rate does not exceed max_rate.
std::vector<TraceSeries> filter_by_max_rate(const std::vector<TraceSeries>& traces, int max_rate);

/// Deterministic arrival list sorted by (time, application order).
std::vector<Arrival> synthesize(const WorkloadSpec& spec);

/// Builds a workload whose aggregate per-second rate stays inside `band`:
/// each application gets a seeded draw from `pool`; every second's aggregate
/// is clamped to the band and split back across applications in proportion to
/// their raw counts (largest remainder).
WorkloadSpec make_banded_workload(const std::vector<Application>& apps,
                                  const std::vector<TraceSeries>& pool, const RateBand& band,
                                  double duration, std::uint64_t seed);

/// Every application gets the same constant rate.
WorkloadSpec make_constant_workload(const std::vector<Application>& apps, int rate,
                                    double duration);

/// Deterministic synthetic trace corpus (diurnal + bursty shapes), used when
/// no trace file is configured. Illustrative data only.
std::vector<TraceSeries> synthetic_traces(int count, int minutes, std::uint64_t seed);

}  // namespace autoscale
