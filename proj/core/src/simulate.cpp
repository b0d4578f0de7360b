#include "dlstm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include "dlstm/errors.hpp"
#include "json.hpp"
#include "rng.hpp"
#include "text_util.hpp"

namespace dlstm {
namespace {

enum StreamTag : std::uint64_t {
  kNetworkStream = 1,
  kNoiseStream = 2,
  kIncidentStream = 3,
  kVehicleStream = 4,
};

std::string road_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "R%02d", i);
  return buf;
}

// Chain sizes for the merge tree, ordered:
//   A entry, A->Toll2 tail, A->Toll3 connector, B entry, C entry,
//   shared trunk, Toll1 tail, Toll3 tail.
// At n = 24 this gives 4, 2, 3, 2, 5, 2, 5, 1.
std::vector<int> merge_tree_chain_sizes(int n) {
  constexpr int kWeights[8] = {3, 1, 2, 1, 4, 1, 4, 0};
  constexpr int kWeightSum = 16;
  const int extra = n - 8;
  std::vector<int> sizes(8, 1);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int i = 0; i < 8; ++i) {
    const double share = static_cast<double>(extra) * kWeights[i] / kWeightSum;
    const int whole = static_cast<int>(std::floor(share));
    sizes[static_cast<std::size_t>(i)] += whole;
    assigned += whole;
    remainders.emplace_back(share - whole, i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < extra - assigned; ++k) {
    ++sizes[static_cast<std::size_t>(remainders[static_cast<std::size_t>(k)].second)];
  }
  return sizes;
}

}  // namespace

const char* to_string(TopologyShape s) {
  return s == TopologyShape::Chain ? "chain" : "merge-tree";
}

TopologyShape parse_shape(std::string_view text) {
  if (text == "chain") return TopologyShape::Chain;
  if (text == "merge-tree") return TopologyShape::MergeTree;
  throw std::invalid_argument("unknown topology shape '" + std::string(text) + "'");
}

void ScenarioConfig::validate() const {
  if (n_roads < 1) throw std::invalid_argument("n_roads must be >= 1");
  if (shape == TopologyShape::MergeTree && n_roads < 8) {
    throw std::invalid_argument("merge-tree scenarios need at least 8 roads");
  }
  if (days < 1) throw std::invalid_argument("days must be >= 1");
  if (interval_min < 1 || 1440 % interval_min != 0) {
    throw std::invalid_argument("interval_min must divide a day");
  }
  if (!(coupling >= 0.0 && coupling < 1.0)) throw std::invalid_argument("coupling must be in [0, 1)");
  if (base_speed_kmh <= 0.0 || daily_amplitude_kmh < 0.0 || noise_std_kmh < 0.0 ||
      incident_rate < 0.0 || incident_depth < 0.0 || incident_duration_min < 0 ||
      vehicles_per_interval < 0.0) {
    throw std::invalid_argument("scenario magnitudes must be non-negative");
  }
  if (!(base_speed_kmh - daily_amplitude_kmh - incident_depth * base_speed_kmh > 0.0)) {
    throw std::invalid_argument("base - amplitude - incident depth * base must stay positive");
  }
}

RoadGraph generate_network(const ScenarioConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(detail::substream(cfg.seed, kNetworkStream));
  std::uniform_real_distribution<double> length(0.5, 3.0);
  std::uniform_int_distribution<int> lanes(1, 3);

  std::vector<RoadSegment> segments;
  for (int i = 0; i < cfg.n_roads; ++i) {
    const double len = length(rng);
    segments.push_back(RoadSegment{road_name(i), len, lanes(rng)});
  }

  std::vector<EdgeSpec> edges;
  std::vector<Route> routes;
  if (cfg.shape == TopologyShape::Chain) {
    Route r{"chain", {}};
    for (int i = 0; i < cfg.n_roads; ++i) {
      r.segments.push_back(road_name(i));
      if (i > 0) edges.push_back({road_name(i - 1), road_name(i)});
    }
    routes.push_back(std::move(r));
    return RoadGraph(std::move(segments), edges, std::move(routes));
  }

  const auto sizes = merge_tree_chain_sizes(cfg.n_roads);
  std::vector<std::vector<std::string>> chains;
  int next = 0;
  for (int size : sizes) {
    std::vector<std::string> chain;
    for (int j = 0; j < size; ++j) {
      chain.push_back(road_name(next++));
      if (j > 0) edges.push_back({chain[static_cast<std::size_t>(j - 1)], chain.back()});
    }
    chains.push_back(std::move(chain));
  }
  enum { kA, kA2, kA3, kB, kC, kTrunk, kT1, kT3 };
  auto join = [&](int from, int to) {
    edges.push_back({chains[static_cast<std::size_t>(from)].back(),
                     chains[static_cast<std::size_t>(to)].front()});
  };
  join(kA, kA2);
  join(kA, kA3);
  join(kA3, kT3);
  join(kB, kTrunk);
  join(kC, kTrunk);
  join(kTrunk, kT1);
  join(kTrunk, kT3);
  auto route = [&](std::string name, std::initializer_list<int> parts) {
    Route r{std::move(name), {}};
    for (int p : parts) {
      const auto& c = chains[static_cast<std::size_t>(p)];
      r.segments.insert(r.segments.end(), c.begin(), c.end());
    }
    routes.push_back(std::move(r));
  };
  route("A->Toll2", {kA, kA2});
  route("A->Toll3", {kA, kA3, kT3});
  route("B->Toll1", {kB, kTrunk, kT1});
  route("B->Toll3", {kB, kTrunk, kT3});
  route("C->Toll1", {kC, kTrunk, kT1});
  route("C->Toll3", {kC, kTrunk, kT3});
  return RoadGraph(std::move(segments), edges, std::move(routes));
}

double realisable_speed(double length_km, double speed_kmh, double min_kmh, double max_kmh) {
  const double seconds = length_km * 3600.0;
  const auto lo = std::max<Timestamp>(1, static_cast<Timestamp>(std::ceil(seconds / max_kmh)));
  const auto hi = static_cast<Timestamp>(std::floor(seconds / min_kmh));
  Timestamp d = std::llround(seconds / std::max(speed_kmh, min_kmh));
  d = std::min(std::max(d, lo), std::max(hi, lo));
  return traversal_speed_kmh(length_km, d);
}

GroundTruth generate_speeds(const ScenarioConfig& cfg, const RoadGraph& graph) {
  cfg.validate();
  const std::size_t n = graph.size();
  const auto steps = static_cast<std::size_t>(cfg.total_steps());
  const int per_day = cfg.steps_per_day();
  const Timestamp step_s = static_cast<Timestamp>(cfg.interval_min) * 60;
  const double ceiling = cfg.base_speed_kmh + cfg.daily_amplitude_kmh + 5.0 * cfg.noise_std_kmh;
  const double drop = cfg.incident_depth * cfg.base_speed_kmh;

  GroundTruth truth;
  std::vector<std::vector<bool>> active(n, std::vector<bool>(steps, false));
  const auto dur_steps = static_cast<std::size_t>(
      (cfg.incident_duration_min + cfg.interval_min - 1) / cfg.interval_min);
  if (cfg.incident_rate > 0.0 && dur_steps > 0) {
    for (std::size_t r = 0; r < n; ++r) {
      std::mt19937_64 rng(detail::substream(cfg.seed, kIncidentStream, r));
      std::poisson_distribution<int> count(cfg.incident_rate);
      std::uniform_int_distribution<int> offset(0, per_day - 1);
      for (int d = 0; d < cfg.days; ++d) {
        std::vector<std::size_t> starts;
        for (int k = count(rng); k > 0; --k) {
          starts.push_back(static_cast<std::size_t>(d * per_day + offset(rng)));
        }
        std::sort(starts.begin(), starts.end());
        for (std::size_t s : starts) {
          const std::size_t e = std::min(s + dur_steps, steps);
          for (std::size_t t = s; t < e; ++t) active[r][t] = true;
          truth.incidents.push_back(Incident{graph.segment(r).id,
                                             cfg.start_time + static_cast<Timestamp>(s) * step_s,
                                             cfg.start_time + static_cast<Timestamp>(e) * step_s});
        }
      }
    }
  }

  std::vector<std::mt19937_64> noise_rng;
  for (std::size_t r = 0; r < n; ++r) {
    noise_rng.emplace_back(detail::substream(cfg.seed, kNoiseStream, r));
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto baseline = [&](std::size_t t) {
    return cfg.base_speed_kmh +
           cfg.daily_amplitude_kmh *
               std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / per_day);
  };

  std::vector<std::vector<double>> v(n, std::vector<double>(steps));
  std::vector<double> dev(n, 0.0);
  std::vector<double> next_dev(n);
  for (std::size_t t = 0; t < steps; ++t) {
    const double b = baseline(t);
    for (std::size_t r = 0; r < n; ++r) {
      double d = 0.0;
      if (t > 0 && cfg.coupling > 0.0) {
        const auto& up = graph.predecessors(r);
        if (!up.empty()) {
          double sum = 0.0;
          for (std::size_t u : up) sum += dev[u];
          d += cfg.coupling * sum / static_cast<double>(up.size());
        }
      }
      if (cfg.noise_std_kmh > 0.0) d += cfg.noise_std_kmh * gauss(noise_rng[r]);
      if (active[r][t]) d -= drop;
      v[r][t] = realisable_speed(graph.segment(r).length_km, b + d, kMinSimSpeed, ceiling);
      next_dev[r] = v[r][t] - b;
    }
    dev.swap(next_dev);
  }

  for (std::size_t r = 0; r < n; ++r) {
    SpeedSeries s;
    s.road_id = graph.segment(r).id;
    s.start_time = cfg.start_time;
    s.interval_min = cfg.interval_min;
    s.values = std::move(v[r]);
    s.observed.assign(steps, true);
    truth.speeds.emplace(s.road_id, std::move(s));
  }
  return truth;
}

std::vector<TraversalRecord> emit_trajectories(const GroundTruth& truth, const RoadGraph& graph,
                                               const ScenarioConfig& cfg) {
  std::vector<TraversalRecord> out;
  const Timestamp step_s = static_cast<Timestamp>(cfg.interval_min) * 60;
  std::size_t vehicle = 0;
  for (std::size_t r = 0; r < graph.size(); ++r) {
    const auto& seg = graph.segment(r);
    const auto it = truth.speeds.find(seg.id);
    if (it == truth.speeds.end()) throw UnknownIdError(seg.id);
    const SpeedSeries& s = it->second;
    std::mt19937_64 rng(detail::substream(cfg.seed, kVehicleStream, r));
    std::uniform_int_distribution<Timestamp> within(0, step_s - 1);
    for (std::size_t t = 0; t < s.size(); ++t) {
      int count = 0;
      if (cfg.vehicles_per_interval > 0.0) {
        count = std::poisson_distribution<int>(cfg.vehicles_per_interval)(rng);
      }
      for (int k = 0; k < count; ++k) {
        const Timestamp exit = s.time_at(t) + within(rng);
        const Timestamp duration = std::llround(seg.length_km * 3600.0 / s.values[t]);
        out.push_back(TraversalRecord{"V" + std::to_string(++vehicle), seg.id, exit - duration, exit});
      }
    }
  }
  return out;
}

ScenarioConfig read_scenario(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("scenario must be a JSON object");
  ScenarioConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "n_roads") c.n_roads = value.get<int>();
      else if (key == "shape") c.shape = parse_shape(value.get<std::string>());
      else if (key == "days") c.days = value.get<int>();
      else if (key == "interval_min") c.interval_min = value.get<int>();
      else if (key == "start_time") c.start_time = parse_iso8601(value.get<std::string>());
      else if (key == "base_speed_kmh") c.base_speed_kmh = value.get<double>();
      else if (key == "daily_amplitude_kmh") c.daily_amplitude_kmh = value.get<double>();
      else if (key == "coupling") c.coupling = value.get<double>();
      else if (key == "noise_std_kmh") c.noise_std_kmh = value.get<double>();
      else if (key == "incident_rate") c.incident_rate = value.get<double>();
      else if (key == "incident_depth") c.incident_depth = value.get<double>();
      else if (key == "incident_duration_min") c.incident_duration_min = value.get<int>();
      else if (key == "vehicles_per_interval") c.vehicles_per_interval = value.get<double>();
      else throw ParseError("unknown scenario key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad scenario value: ") + e.what());
  }
  c.validate();
  return c;
}

void write_scenario(std::ostream& out, const ScenarioConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["n_roads"] = c.n_roads;
  j["shape"] = to_string(c.shape);
  j["days"] = c.days;
  j["interval_min"] = c.interval_min;
  j["start_time"] = format_iso8601(c.start_time);
  j["base_speed_kmh"] = c.base_speed_kmh;
  j["daily_amplitude_kmh"] = c.daily_amplitude_kmh;
  j["coupling"] = c.coupling;
  j["noise_std_kmh"] = c.noise_std_kmh;
  j["incident_rate"] = c.incident_rate;
  j["incident_depth"] = c.incident_depth;
  j["incident_duration_min"] = c.incident_duration_min;
  j["vehicles_per_interval"] = c.vehicles_per_interval;
  out << j.dump(2) << '\n';
}

void write_incidents(std::ostream& out, std::span<const Incident> incidents) {
  out << "road_id,start,end\n";
  for (const auto& i : incidents) {
    out << i.road_id << ',' << format_iso8601(i.start) << ',' << format_iso8601(i.end) << '\n';
  }
}

std::vector<Incident> read_incidents(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing incident CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "road_id,start,end") throw ParseError("unexpected incident CSV header '" + line + "'");
  std::vector<Incident> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) throw ParseError("incident row needs 3 fields");
    out.push_back(Incident{std::string(f[0]), parse_iso8601(f[1]), parse_iso8601(f[2])});
  }
  return out;
}

}  // namespace dlstm
