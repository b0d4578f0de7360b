#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dlstm/ingest.hpp"
#include "dlstm/road_graph.hpp"
#include "dlstm/timeutil.hpp"

namespace dlstm {

enum class TopologyShape { Chain, MergeTree };

const char* to_string(TopologyShape s);
TopologyShape parse_shape(std::string_view text);

// Synthetic scenario. Dynamics per interval t, with periodic baseline
// b(t) = base + amplitude * sin(2 pi t / steps_per_day):
//
//   v_l(t+1) = b(t+1) + coupling * mean_{u upstream of l}(v_u(t) - b(t))
//              + N(0, noise_std) - incident_depth * base  (while an incident
//              is active on l)
//
// Speeds are clamped to [5, base + amplitude + 5 noise_std] km/h and then
// snapped to a whole-second traversal time of the segment, so the emitted
// second-resolution trajectories reproduce them exactly.
struct ScenarioConfig {
  std::uint64_t seed = 1;
  int n_roads = 24;
  TopologyShape shape = TopologyShape::MergeTree;
  int days = 30;
  int interval_min = 1;
  Timestamp start_time = 1704067200;  // 2024-01-01T00:00:00Z
  double base_speed_kmh = 90.0;
  double daily_amplitude_kmh = 15.0;
  double coupling = 0.4;
  double noise_std_kmh = 3.0;
  double incident_rate = 0.5;  // per road-day
  double incident_depth = 0.4;  // fraction of base speed
  int incident_duration_min = 45;
  double vehicles_per_interval = 2.0;  // Poisson mean per road and interval

  void validate() const;  // throws std::invalid_argument
  int steps_per_day() const { return 1440 / interval_min; }
  int total_steps() const { return days * steps_per_day(); }
  TimeSpan span() const {
    return {start_time, start_time + static_cast<Timestamp>(total_steps()) * interval_min * 60};
  }
};

inline constexpr double kMinSimSpeed = 5.0;

// Chain: one path R00 -> R01 -> ... with a single route "chain".
// MergeTree: three entries (A, B, C) merging toward three toll exits with six
// routes A->Toll2, A->Toll3, B->Toll1, B->Toll3, C->Toll1, C->Toll3; needs
// n_roads >= 8. Segment lengths are drawn in [0.5, 3] km.
RoadGraph generate_network(const ScenarioConfig& cfg);

struct Incident {
  std::string road_id;
  Timestamp start = 0;
  Timestamp end = 0;  // exclusive
};

struct GroundTruth {
  SeriesMap speeds;  // fully observed
  std::vector<Incident> incidents;
};

// Speed with a whole-second traversal time of `length_km`, clamped to
// [min_kmh, max_kmh].
double realisable_speed(double length_km, double speed_kmh, double min_kmh, double max_kmh);

GroundTruth generate_speeds(const ScenarioConfig& cfg, const RoadGraph& graph);

// Poisson(vehicles_per_interval) traversals per road and interval, each
// exiting at a seeded second inside the interval with duration
// length / ground-truth speed.
std::vector<TraversalRecord> emit_trajectories(const GroundTruth& truth, const RoadGraph& graph,
                                               const ScenarioConfig& cfg);

// Scenario file: JSON object whose keys mirror ScenarioConfig fields;
// missing keys keep their defaults, unknown keys are rejected.
ScenarioConfig read_scenario(std::istream& in);
void write_scenario(std::ostream& out, const ScenarioConfig& cfg);

// road_id,start,end (ISO-8601).
void write_incidents(std::ostream& out, std::span<const Incident> incidents);
std::vector<Incident> read_incidents(std::istream& in);

}  // namespace dlstm
