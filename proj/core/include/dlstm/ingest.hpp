#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dlstm/road_graph.hpp"
#include "dlstm/timeutil.hpp"

namespace dlstm {

// One vehicle traversing one road segment. exit_time > enter_time.
struct TraversalRecord {
  std::string vehicle_id;
  std::string road_id;
  Timestamp enter_time = 0;
  Timestamp exit_time = 0;
};

// Half-open time range [start, end).
struct TimeSpan {
  Timestamp start = 0;
  Timestamp end = 0;
};

// Per-road average speed at a fixed interval. Unobserved entries hold NaN
// until impute() fills them; observed[i] stays false for filled entries.
struct SpeedSeries {
  std::string road_id;
  Timestamp start_time = 0;
  int interval_min = 1;
  std::vector<double> values;
  std::vector<bool> observed;

  std::size_t size() const noexcept { return values.size(); }
  Timestamp time_at(std::size_t i) const {
    return start_time + static_cast<Timestamp>(i) * interval_min * 60;
  }
};

using SeriesMap = std::map<std::string, SpeedSeries>;

struct AggregateStats {
  std::size_t used = 0;
  std::size_t dropped_outside_span = 0;
};

struct AggregateResult {
  SeriesMap series;
  AggregateStats stats;
};

// Speed implied by covering `length_km` in `duration_s` seconds.
double traversal_speed_kmh(double length_km, Timestamp duration_s);

// Buckets each record into the interval holding its exit_time and averages
// per-vehicle speeds (arithmetic mean). Every graph road gets a series of
// (span.end - span.start) / interval entries. Records whose exit_time falls
// outside the span are dropped and counted.
//
// Throws UnknownIdError for unknown roads, std::invalid_argument for a bad
// span/interval or a record with exit_time <= enter_time.
AggregateResult aggregate_speeds(std::span<const TraversalRecord> records,
                                 const RoadGraph& graph, int interval_min, TimeSpan span);

// Last observation carried forward; a leading gap takes the first observed
// value. Throws DomainError when nothing is observed.
SpeedSeries impute(SpeedSeries series);

struct MinMax {
  double min = 0.0;
  double max = 1.0;

  double normalize(double x) const { return (x - min) / (max - min); }
  double denormalize(double y) const { return min + y * (max - min); }
};

// Per-road min-max scaling fitted on training data only. Values outside the
// fitted range map outside [0, 1]; nothing is clipped.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(std::map<std::string, MinMax> ranges);

  double normalize(const std::string& road, double kmh) const;
  double denormalize(const std::string& road, double y) const;
  const MinMax& range(const std::string& road) const;  // throws UnknownIdError
  const std::map<std::string, MinMax>& ranges() const noexcept { return ranges_; }

 private:
  std::map<std::string, MinMax> ranges_;
};

// Throws DomainError for an empty or constant series.
Normalizer fit_normalizer(const SeriesMap& train);

// Index of the first interval at or after `boundary`.
std::size_t boundary_index(const SpeedSeries& series, Timestamp boundary);

// Contiguous order-preserving split at `boundary`: train holds intervals
// strictly before it, test the rest. Throws std::invalid_argument when
// either side would be empty.
std::pair<SpeedSeries, SpeedSeries> split(const SpeedSeries& series, Timestamp boundary);
std::pair<SeriesMap, SeriesMap> split(const SeriesMap& series, Timestamp boundary);

// Trajectory CSV: vehicle_id,road_id,enter_time,exit_time (ISO-8601).
std::vector<TraversalRecord> read_trajectories(std::istream& in);
void write_trajectories(std::ostream& out, std::span<const TraversalRecord> records);

// Speed-series CSV: road_id,timestamp,speed_kmh,observed. Rows are grouped
// by road in map order, then by time. Unobserved, unimputed values are
// written as an empty field.
void write_speed_series(std::ostream& out, const SeriesMap& series);
SeriesMap read_speed_series(std::istream& in);

}  // namespace dlstm
