#include "dlstm/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "dlstm/errors.hpp"
#include "text_util.hpp"

namespace dlstm {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void expect_header(std::istream& in, std::string_view expected) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) {
    throw ParseError("unexpected CSV header '" + line + "', want '" + std::string(expected) + "'");
  }
}

}  // namespace

double traversal_speed_kmh(double length_km, Timestamp duration_s) {
  return length_km / (static_cast<double>(duration_s) / 3600.0);
}

AggregateResult aggregate_speeds(std::span<const TraversalRecord> records,
                                 const RoadGraph& graph, int interval_min, TimeSpan span) {
  if (interval_min < 1) throw std::invalid_argument("interval must be >= 1 minute");
  if (span.end <= span.start) throw std::invalid_argument("empty aggregation span");
  const Timestamp step = static_cast<Timestamp>(interval_min) * 60;
  if ((span.end - span.start) % step != 0) {
    throw std::invalid_argument("span length is not a whole number of intervals");
  }
  const auto count = static_cast<std::size_t>((span.end - span.start) / step);
  const std::size_t n = graph.size();

  // Incremental mean: exact when every contribution is the same value.
  std::vector<std::vector<double>> mean(n, std::vector<double>(count, 0.0));
  std::vector<std::vector<std::size_t>> hits(n, std::vector<std::size_t>(count, 0));

  AggregateResult result;
  for (const auto& r : records) {
    const std::size_t road = graph.index_of(r.road_id);
    if (r.exit_time <= r.enter_time) {
      throw std::invalid_argument("record for '" + r.road_id + "' exits before it enters");
    }
    if (r.exit_time < span.start || r.exit_time >= span.end) {
      ++result.stats.dropped_outside_span;
      continue;
    }
    const auto slot = static_cast<std::size_t>((r.exit_time - span.start) / step);
    const double v =
        traversal_speed_kmh(graph.segment(road).length_km, r.exit_time - r.enter_time);
    const std::size_t c = ++hits[road][slot];
    mean[road][slot] += (v - mean[road][slot]) / static_cast<double>(c);
    ++result.stats.used;
  }

  for (std::size_t i = 0; i < n; ++i) {
    SpeedSeries s;
    s.road_id = graph.segment(i).id;
    s.start_time = span.start;
    s.interval_min = interval_min;
    s.values.resize(count);
    s.observed.resize(count);
    for (std::size_t t = 0; t < count; ++t) {
      s.observed[t] = hits[i][t] > 0;
      s.values[t] = s.observed[t] ? mean[i][t] : kNaN;
    }
    result.series.emplace(s.road_id, std::move(s));
  }
  return result;
}

SpeedSeries impute(SpeedSeries series) {
  const auto first = std::find(series.observed.begin(), series.observed.end(), true);
  if (first == series.observed.end()) {
    throw DomainError("series '" + series.road_id + "' has no observed entries");
  }
  double last = series.values[static_cast<std::size_t>(first - series.observed.begin())];
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (series.observed[t]) last = series.values[t];
    else series.values[t] = last;
  }
  return series;
}

Normalizer::Normalizer(std::map<std::string, MinMax> ranges) : ranges_(std::move(ranges)) {
  for (const auto& [road, r] : ranges_) {
    if (!(r.max > r.min)) throw DomainError("degenerate range for road '" + road + "'");
  }
}

const MinMax& Normalizer::range(const std::string& road) const {
  const auto it = ranges_.find(road);
  if (it == ranges_.end()) throw UnknownIdError(road);
  return it->second;
}

double Normalizer::normalize(const std::string& road, double kmh) const {
  return range(road).normalize(kmh);
}

double Normalizer::denormalize(const std::string& road, double y) const {
  return range(road).denormalize(y);
}

Normalizer fit_normalizer(const SeriesMap& train) {
  std::map<std::string, MinMax> ranges;
  for (const auto& [road, s] : train) {
    if (s.values.empty()) throw DomainError("empty training series for road '" + road + "'");
    const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
    if (!(*hi > *lo)) {
      throw DomainError("constant training series for road '" + road + "'");
    }
    ranges.emplace(road, MinMax{*lo, *hi});
  }
  return Normalizer(std::move(ranges));
}

std::size_t boundary_index(const SpeedSeries& series, Timestamp boundary) {
  const Timestamp step = static_cast<Timestamp>(series.interval_min) * 60;
  if (boundary <= series.start_time) return 0;
  const auto idx = static_cast<std::size_t>((boundary - series.start_time + step - 1) / step);
  return std::min(idx, series.size());
}

std::pair<SpeedSeries, SpeedSeries> split(const SpeedSeries& series, Timestamp boundary) {
  const std::size_t cut = boundary_index(series, boundary);
  if (cut == 0) throw std::invalid_argument("split boundary leaves an empty training set");
  if (cut >= series.size()) throw std::invalid_argument("split boundary leaves an empty test set");

  SpeedSeries train = series;
  SpeedSeries test = series;
  train.values.resize(cut);
  train.observed.resize(cut);
  test.start_time = series.time_at(cut);
  test.values.assign(series.values.begin() + static_cast<std::ptrdiff_t>(cut), series.values.end());
  test.observed.assign(series.observed.begin() + static_cast<std::ptrdiff_t>(cut),
                       series.observed.end());
  return {std::move(train), std::move(test)};
}

std::pair<SeriesMap, SeriesMap> split(const SeriesMap& series, Timestamp boundary) {
  std::pair<SeriesMap, SeriesMap> out;
  for (const auto& [road, s] : series) {
    auto [a, b] = split(s, boundary);
    out.first.emplace(road, std::move(a));
    out.second.emplace(road, std::move(b));
  }
  return out;
}

std::vector<TraversalRecord> read_trajectories(std::istream& in) {
  expect_header(in, "vehicle_id,road_id,enter_time,exit_time");
  std::vector<TraversalRecord> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 4) {
      throw ParseError("trajectory row " + std::to_string(line_no) + " needs 4 fields");
    }
    out.push_back(TraversalRecord{std::string(f[0]), std::string(f[1]), parse_iso8601(f[2]),
                                  parse_iso8601(f[3])});
  }
  return out;
}

void write_trajectories(std::ostream& out, std::span<const TraversalRecord> records) {
  out << "vehicle_id,road_id,enter_time,exit_time\n";
  for (const auto& r : records) {
    out << r.vehicle_id << ',' << r.road_id << ',' << format_iso8601(r.enter_time) << ','
        << format_iso8601(r.exit_time) << '\n';
  }
}

void write_speed_series(std::ostream& out, const SeriesMap& series) {
  out << "road_id,timestamp,speed_kmh,observed\n";
  for (const auto& [road, s] : series) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      out << road << ',' << format_iso8601(s.time_at(t)) << ',';
      if (!std::isnan(s.values[t])) out << detail::format_double(s.values[t]);
      out << ',' << (s.observed[t] ? 1 : 0) << '\n';
    }
  }
}

SeriesMap read_speed_series(std::istream& in) {
  expect_header(in, "road_id,timestamp,speed_kmh,observed");
  SeriesMap out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 4) {
      throw ParseError("speed row " + std::to_string(line_no) + " needs 4 fields");
    }
    const std::string road(f[0]);
    const Timestamp ts = parse_iso8601(f[1]);
    const double v = f[2].empty() ? kNaN : detail::parse_double(f[2]);
    const bool observed = f[3] == "1" || f[3] == "true";

    auto [it, inserted] = out.try_emplace(road);
    SpeedSeries& s = it->second;
    if (inserted) {
      s.road_id = road;
      s.start_time = ts;
    } else if (s.size() == 1) {
      const Timestamp step = ts - s.start_time;
      if (step <= 0 || step % 60 != 0) {
        throw ParseError("irregular interval for road '" + road + "'");
      }
      s.interval_min = static_cast<int>(step / 60);
    }
    if (s.size() >= 1 && ts != s.time_at(s.size())) {
      throw ParseError("non-contiguous timestamp for road '" + road + "' at row " +
                       std::to_string(line_no));
    }
    s.values.push_back(v);
    s.observed.push_back(observed);
  }
  return out;
}

}  // namespace dlstm
