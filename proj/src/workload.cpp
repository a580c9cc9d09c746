#include "autoscale/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/core.h>

namespace autoscale {

TraceParseError::TraceParseError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(fmt::format("{}:{}: {}", source, line, what)), line_(line) {}

int TraceSeries::max_rate() const { return *std::max_element(counts.begin(), counts.end()); }

int TraceSeries::rate_at(int second) const {
  return counts[static_cast<std::size_t>(second) % counts.size()];
}

RateBand training_band() { return {"train", 10.0, 60.0}; }

std::vector<RateBand> evaluation_bands() {
  return {{"low", 5.0, 20.0}, {"mid", 20.0, 40.0}, {"high", 40.0, 60.0}};
}

RateBand band_by_name(const std::string& name) {
  if (name == "train") return training_band();
  for (const auto& b : evaluation_bands()) {
    if (b.name == name) return b;
  }
  throw ConfigError(fmt::format("unknown rate band '{}'", name));
}

std::vector<TraceSeries> parse_traces(std::istream& in, const std::string& source) {
  std::vector<TraceSeries> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw TraceParseError(source, line_no, "expected 'id, counts'");
    TraceSeries s;
    std::istringstream id_stream(line.substr(0, comma));
    id_stream >> s.trace_id;
    if (s.trace_id.empty()) throw TraceParseError(source, line_no, "empty trace id");
    std::istringstream counts(line.substr(comma + 1));
    std::string token;
    while (counts >> token) {
      std::size_t used = 0;
      long value = 0;
      try {
        value = std::stol(token, &used);
      } catch (const std::exception&) {
        throw TraceParseError(source, line_no, fmt::format("bad count '{}'", token));
      }
      if (used != token.size()) {
        throw TraceParseError(source, line_no, fmt::format("bad count '{}'", token));
      }
      if (value < 0) {
        throw TraceParseError(source, line_no, fmt::format("negative count {}", value));
      }
      s.counts.push_back(static_cast<int>(value));
    }
    if (s.counts.empty()) throw TraceParseError(source, line_no, "trace has no counts");
    out.push_back(std::move(s));
  }
  if (out.empty()) throw TraceParseError(source, line_no, "no traces found");
  return out;
}

std::vector<TraceSeries> load_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open trace file", path.string()));
  return parse_traces(in, path.string());
}

void save_traces(const std::filesystem::path& path, const std::vector<TraceSeries>& traces) {
  std::ofstream out(path);
  if (!out) throw ConfigError(fmt::format("{}: cannot write trace file", path.string()));
  for (const auto& t : traces) {
    out << t.trace_id << ',';
    for (int c : t.counts) out << ' ' << c;
    out << '\n';
  }
}

std::vector<TraceSeries> filter_by_max_rate(const std::vector<TraceSeries>& traces, int max_rate) {
  std::vector<TraceSeries> out;
  std::copy_if(traces.begin(), traces.end(), std::back_inserter(out),
               [max_rate](const TraceSeries& t) { return t.max_rate() <= max_rate; });
  return out;
}

std::vector<Arrival> synthesize(const WorkloadSpec& spec) {
  if (!(spec.duration > 0.0)) throw ConfigError("workload duration must be positive");
  std::set<FunctionId> entries;
  for (const auto& app : spec.applications) {
    if (!spec.rates.contains(app.app_id)) {
      throw ConfigError(fmt::format("application {} has no trace assignment", app.app_id));
    }
    entries.insert(app.entry_function());
  }
  if (spec.max_entry_functions > 0 &&
      static_cast<int>(entries.size()) > spec.max_entry_functions) {
    throw ConfigError(fmt::format("workload has {} entry functions; at most {} allowed",
                                  entries.size(), spec.max_entry_functions));
  }

  struct Keyed {
    Arrival arrival;
    std::size_t app_order;
  };
  std::vector<Keyed> keyed;
  std::mt19937_64 rng(spec.seed);
  const int seconds = static_cast<int>(std::ceil(spec.duration));
  for (std::size_t a = 0; a < spec.applications.size(); ++a) {
    const auto& app = spec.applications[a];
    const auto& rates = spec.rates.at(app.app_id);
    if (rates.empty()) throw ConfigError(fmt::format("application {} has an empty rate series", app.app_id));
    for (int s = 0; s < seconds; ++s) {
      const int rate = rates[static_cast<std::size_t>(s) % rates.size()];
      if (rate <= 0) continue;
      if (spec.model == ArrivalModel::Uniform) {
        for (int i = 0; i < rate; ++i) {
          const double t = s + (i + 0.5) / rate;
          if (t < spec.duration) keyed.push_back({{t, app.app_id}, a});
        }
      } else {
        std::exponential_distribution<double> gap(rate);
        double t = s + gap(rng);
        while (t < s + 1 && t < spec.duration) {
          keyed.push_back({{t, app.app_id}, a});
          t += gap(rng);
        }
      }
    }
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& x, const Keyed& y) {
    return x.arrival.time != y.arrival.time ? x.arrival.time < y.arrival.time
                                            : x.app_order < y.app_order;
  });
  std::vector<Arrival> out;
  out.reserve(keyed.size());
  for (const auto& k : keyed) out.push_back(k.arrival);
  return out;
}

WorkloadSpec make_banded_workload(const std::vector<Application>& apps,
                                  const std::vector<TraceSeries>& pool, const RateBand& band,
                                  double duration, std::uint64_t seed) {
  if (apps.empty()) throw ConfigError("workload needs at least one application");
  if (pool.empty()) throw ConfigError("trace pool is empty");
  if (!(band.min_rate <= band.max_rate)) throw ConfigError("rate band min exceeds max");

  WorkloadSpec spec;
  spec.duration = duration;
  spec.applications = apps;
  spec.seed = seed;
  spec.band = band.name;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<const TraceSeries*> chosen;
  std::vector<int> offsets;
  for (std::size_t i = 0; i < apps.size(); ++i) {
    const auto* t = &pool[pick(rng)];
    chosen.push_back(t);
    std::uniform_int_distribution<int> off(0, static_cast<int>(t->counts.size()) - 1);
    offsets.push_back(off(rng));
  }

  // Each second's aggregate target maps the raw aggregate, relative to its
  // peak, linearly onto the band.
  const int seconds = static_cast<int>(std::ceil(duration));
  std::vector<std::vector<int>> raw(apps.size(), std::vector<int>(static_cast<std::size_t>(seconds)));
  std::vector<int> raw_total(static_cast<std::size_t>(seconds), 0);
  for (std::size_t a = 0; a < apps.size(); ++a) {
    for (int s = 0; s < seconds; ++s) {
      raw[a][s] = chosen[a]->rate_at(s + offsets[a]);
      raw_total[s] += raw[a][s];
    }
  }
  const int peak = std::max(1, *std::max_element(raw_total.begin(), raw_total.end()));
  const int lo = static_cast<int>(std::ceil(band.min_rate));
  const int hi = static_cast<int>(std::floor(band.max_rate));

  for (const auto& app : apps) spec.rates[app.app_id].assign(static_cast<std::size_t>(seconds), 0);
  for (int s = 0; s < seconds; ++s) {
    const double position = static_cast<double>(raw_total[s]) / peak;
    const int target = std::clamp(lo + static_cast<int>(std::lround(position * (hi - lo))), lo, hi);
    // Largest-remainder split proportional to raw counts (equal if all zero).
    std::vector<double> weight(apps.size());
    for (std::size_t a = 0; a < apps.size(); ++a) {
      weight[a] = raw_total[s] > 0 ? static_cast<double>(raw[a][s]) / raw_total[s]
                                   : 1.0 / static_cast<double>(apps.size());
    }
    std::vector<int> share(apps.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t a = 0; a < apps.size(); ++a) {
      const double exact = weight[a] * target;
      share[a] = static_cast<int>(std::floor(exact));
      assigned += share[a];
      remainders.emplace_back(exact - share[a], a);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t k = 0; assigned < target; ++k, ++assigned) {
      share[remainders[k % remainders.size()].second] += 1;
    }
    for (std::size_t a = 0; a < apps.size(); ++a) spec.rates[apps[a].app_id][s] = share[a];
  }
  return spec;
}

WorkloadSpec make_constant_workload(const std::vector<Application>& apps, int rate,
                                    double duration) {
  WorkloadSpec spec;
  spec.duration = duration;
  spec.applications = apps;
  spec.band = "constant";
  for (const auto& app : apps) spec.rates[app.app_id] = {rate};
  return spec;
}

std::vector<TraceSeries> synthetic_traces(int count, int minutes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TraceSeries> out;
  constexpr double kTwoPi = 6.283185307179586;
  for (int i = 0; i < count; ++i) {
    TraceSeries t;
    t.trace_id = fmt::format("synthetic-{:04d}", i);
    const double base = 2.0 + 28.0 * unit(rng);
    const double swing = base * (0.2 + 0.6 * unit(rng));
    const double period = 30.0 + 240.0 * unit(rng);
    const double phase = kTwoPi * unit(rng);
    const double burst_prob = 0.02 + 0.05 * unit(rng);
    for (int m = 0; m < minutes; ++m) {
      double rate = base + swing * std::sin(kTwoPi * m / period + phase);
      if (unit(rng) < burst_prob) rate *= 1.5 + unit(rng);
      rate += (unit(rng) - 0.5) * 0.2 * base;
      t.counts.push_back(std::max(0, static_cast<int>(std::lround(rate))));
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace autoscale
