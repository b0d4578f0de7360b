#include "dlstm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <stdexcept>

#include "dlstm/errors.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace dlstm {
namespace {

struct Point {
  std::size_t t;
  double pred;
  double actual;
};

using PointTable = std::map<ModelVariant, std::map<std::string, std::vector<Point>>>;

const TrainedModel& find_model(const ModelSet& set, const std::string& road, ModelVariant v) {
  const auto it = set.find(road);
  if (it == set.end()) {
    throw UnknownIdError(std::string("no ") + to_string(v) + " model for road '" + road + "'", road);
  }
  return it->second;
}

double points_mape(const std::vector<Point>& pts,
                   const std::function<bool(std::size_t)>& keep, std::size_t* count) {
  std::vector<double> preds;
  std::vector<double> actuals;
  for (const auto& p : pts) {
    if (!keep(p.t)) continue;
    preds.push_back(p.pred);
    actuals.push_back(p.actual);
  }
  *count = preds.size();
  return preds.empty() ? 0.0 : mape(preds, actuals);
}

SliceResult score_slice(const std::string& name, const PointTable& table,
                        const std::vector<std::string>& roads, const std::vector<Route>& courses,
                        const std::function<bool(const std::string&, std::size_t)>& keep) {
  SliceResult out;
  out.name = name;
  for (const auto& road : roads) {
    RoadResult rr;
    for (const auto& [variant, per_road] : table) {
      std::size_t count = 0;
      const double m = points_mape(per_road.at(road), [&](std::size_t t) { return keep(road, t); },
                                   &count);
      if (count == 0) continue;
      rr.samples = std::max(rr.samples, count);
      rr.mape[variant] = m;
    }
    if (rr.samples > 0) out.roads.emplace(road, std::move(rr));
  }

  for (const auto& course : courses) {
    CourseResult cr;
    cr.course = course.name;
    cr.roads = course.segments;
    for (const auto& [variant, per_road] : table) {
      double sum = 0.0;
      int members = 0;
      for (const auto& road : course.segments) {
        const auto it = out.roads.find(road);
        if (it == out.roads.end()) continue;
        const auto m = it->second.mape.find(variant);
        if (m == it->second.mape.end()) continue;
        sum += m->second;
        ++members;
      }
      if (members == 0) {
        throw DomainError("slice '" + name + "' is empty for course '" + course.name + "'");
      }
      cr.mape[variant] = sum / members;
    }
    const auto proposed = cr.mape.find(ModelVariant::Proposed);
    std::optional<double> best;
    for (auto v : {ModelVariant::Baseline1, ModelVariant::Baseline2}) {
      const auto it = cr.mape.find(v);
      if (it != cr.mape.end()) best = best ? std::min(*best, it->second) : it->second;
    }
    if (proposed != cr.mape.end() && best) cr.difference = *best - proposed->second;
    out.courses.push_back(std::move(cr));
  }
  return out;
}

std::size_t to_index(const SpeedPanel& panel, Timestamp ts) {
  const Timestamp step = static_cast<Timestamp>(panel.interval_min) * 60;
  if (ts <= panel.start_time) return 0;
  const auto idx = static_cast<std::size_t>((ts - panel.start_time + step - 1) / step);
  return std::min(idx, panel.length());
}

}  // namespace

EvalReport evaluate(const VariantModels& models, const SpeedPanel& panel,
                    const FeatureScaling& scaling, std::size_t test_begin, std::size_t test_end,
                    const std::vector<Route>& courses, const std::vector<EvalSlice>& slices,
                    const EvalOptions& options) {
  if (models.empty()) throw std::invalid_argument("evaluate needs at least one model variant");
  if (test_begin >= test_end || test_end > panel.length()) {
    throw std::out_of_range("test range is empty or exceeds the panel");
  }

  std::vector<std::string> roads;
  if (courses.empty()) {
    roads = panel.road_ids;
  } else {
    for (const auto& id : panel.road_ids) {
      const bool member = std::any_of(courses.begin(), courses.end(), [&](const Route& c) {
        return std::find(c.segments.begin(), c.segments.end(), id) != c.segments.end();
      });
      if (member) roads.push_back(id);
    }
    for (const auto& c : courses) {
      for (const auto& id : c.segments) (void)panel.road_index(id);
    }
  }

  EvalReport report;
  report.test_begin = test_begin;
  report.test_end = test_end;
  PointTable table;
  for (const auto& [variant, set] : models) {
    report.variants.push_back(variant);
    auto& per_road = table[variant];
    for (const auto& road : roads) {
      const TrainedModel& model = find_model(set, road, variant);
      const std::size_t r = panel.road_index(road);
      const auto first = std::max(test_begin + static_cast<std::size_t>(model.window),
                                  static_cast<std::size_t>(model.window));
      auto& pts = per_road[road];
      for (std::size_t t = first; t < test_end; ++t) {
        if (options.exclude_imputed && !panel.observed[r][t]) continue;
        const RowMatrix x = build_features(variant, r, panel, scaling, t, model.window);
        pts.push_back(Point{t, predict_one(model, x), panel.kmh[r][t]});
      }
      if (pts.empty()) {
        throw DomainError("road '" + road + "' has no scorable test targets");
      }
    }
  }

  report.overall = score_slice("all", table, roads, courses,
                               [](const std::string&, std::size_t) { return true; });
  for (const auto& slice : slices) {
    report.slices.push_back(score_slice(
        slice.name, table, roads, courses, [&](const std::string& road, std::size_t t) {
          const auto it = slice.mask.find(road);
          return it != slice.mask.end() && t < it->second.size() && it->second[t];
        }));
  }
  return report;
}

std::vector<EvalSlice> incident_slices(std::span<const Incident> incidents, const RoadGraph& graph,
                                       const SpeedPanel& panel, int hops) {
  if (hops < 0) throw std::invalid_argument("hops must be >= 0");
  const std::size_t n = graph.size();
  const std::size_t len = panel.length();
  std::vector<std::vector<bool>> hit(n, std::vector<bool>(len, false));

  for (const auto& inc : incidents) {
    const std::size_t src = graph.index_of(inc.road_id);
    const std::size_t begin = to_index(panel, inc.start);
    const std::size_t end = std::min(len, to_index(panel, inc.end) + static_cast<std::size_t>(hops));
    // Roads reachable downstream from the incident within `hops` edges.
    std::vector<int> depth(n, -1);
    std::vector<std::size_t> frontier{src};
    depth[src] = 0;
    for (int h = 0; h < hops; ++h) {
      std::vector<std::size_t> next;
      for (std::size_t u : frontier) {
        for (std::size_t v : graph.successors(u)) {
          if (depth[v] >= 0) continue;
          depth[v] = h + 1;
          next.push_back(v);
        }
      }
      frontier.swap(next);
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (depth[r] < 0) continue;
      for (std::size_t t = begin; t < end; ++t) hit[r][t] = true;
    }
  }

  EvalSlice incident{"incident", {}};
  EvalSlice normal{"normal", {}};
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<bool> inverse(len);
    for (std::size_t t = 0; t < len; ++t) inverse[t] = !hit[r][t];
    incident.mask.emplace(graph.segment(r).id, std::move(hit[r]));
    normal.mask.emplace(graph.segment(r).id, std::move(inverse));
  }
  return {std::move(incident), std::move(normal)};
}

std::vector<SeriesRow> export_series(const TrainedModel& model, const SpeedPanel& panel,
                                     const FeatureScaling& scaling, std::size_t begin,
                                     std::size_t end) {
  if (begin > end || end > panel.length()) throw std::out_of_range("export span leaves the data");
  if (begin < static_cast<std::size_t>(model.window)) {
    throw std::out_of_range("export span starts before a full history window");
  }
  const std::size_t r = panel.road_index(model.road_id);
  std::vector<SeriesRow> rows;
  rows.reserve(end - begin);
  for (std::size_t t = begin; t < end; ++t) {
    const RowMatrix x = build_features(model.variant, r, panel, scaling, t, model.window);
    rows.push_back(SeriesRow{panel.time_at(t), panel.kmh[r][t], predict_one(model, x),
                             panel.observed[r][t]});
  }
  return rows;
}

void write_series_csv(std::ostream& out, std::span<const SeriesRow> rows) {
  out << "timestamp,actual_kmh,predicted_kmh,observed\n";
  for (const auto& row : rows) {
    out << format_iso8601(row.time) << ',' << detail::format_double(row.actual_kmh) << ','
        << detail::format_double(row.predicted_kmh) << ',' << (row.observed ? 1 : 0) << '\n';
  }
}

RollingReport evaluate_rolling(const ModelSet& models, const RoadGraph& graph,
                               const SpeedPanel& panel, const FeatureScaling& scaling,
                               std::size_t test_begin, std::size_t test_end, int steps,
                               std::size_t stride, const EvalOptions& options) {
  if (models.empty()) throw std::invalid_argument("no models to evaluate");
  if (steps < 1 || stride < 1) throw std::invalid_argument("steps and stride must be >= 1");
  const TrainedModel& any = models.begin()->second;
  const auto window = static_cast<std::size_t>(any.window);
  const std::size_t n = panel.road_count();
  const auto m = static_cast<std::size_t>(steps);

  std::vector<std::vector<double>> err(n, std::vector<double>(m, 0.0));
  std::vector<std::vector<std::size_t>> cnt(n, std::vector<std::size_t>(m, 0));
  for (std::size_t origin = std::max(test_begin, window); origin + m <= test_end;
       origin += stride) {
    const auto forecast = rolling_forecast(models, graph, panel, scaling, origin, steps);
    for (std::size_t r = 0; r < n; ++r) {
      const auto& preds = forecast.at(panel.road_ids[r]);
      for (std::size_t h = 0; h < m; ++h) {
        const std::size_t t = origin + h;
        if (options.exclude_imputed && !panel.observed[r][t]) continue;
        const double actual = panel.kmh[r][t];
        err[r][h] += std::abs(preds[h] - actual) / std::max(actual, kMapeFloor);
        ++cnt[r][h];
      }
    }
  }

  RollingReport report;
  report.variant = any.variant;
  report.steps = steps;
  for (std::size_t r = 0; r < n; ++r) {
    auto& row = report.road_mape_by_step[panel.road_ids[r]];
    for (std::size_t h = 0; h < m; ++h) {
      if (cnt[r][h] == 0) throw DomainError("rolling evaluation has no scorable origins");
      row.push_back(100.0 * err[r][h] / static_cast<double>(cnt[r][h]));
    }
  }
  return report;
}

namespace {

nlohmann::ordered_json slice_json(const SliceResult& s, const std::vector<ModelVariant>& variants) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  nlohmann::ordered_json courses = nlohmann::ordered_json::array();
  for (const auto& c : s.courses) {
    nlohmann::ordered_json cj;
    cj["course"] = c.course;
    cj["roads"] = c.roads;
    nlohmann::ordered_json mj = nlohmann::ordered_json::object();
    for (auto v : variants) mj[to_string(v)] = c.mape.at(v);
    cj["mape"] = std::move(mj);
    cj["difference"] = c.difference ? nlohmann::ordered_json(*c.difference) : nullptr;
    courses.push_back(std::move(cj));
  }
  j["courses"] = std::move(courses);
  nlohmann::ordered_json roads = nlohmann::ordered_json::object();
  for (const auto& [road, rr] : s.roads) {
    nlohmann::ordered_json rj;
    rj["samples"] = rr.samples;
    for (const auto& [v, m] : rr.mape) rj[to_string(v)] = m;
    roads[road] = std::move(rj);
  }
  j["roads"] = std::move(roads);
  return j;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void text_slice(std::ostream& out, const SliceResult& s, const std::vector<ModelVariant>& variants) {
  out << "== " << s.name << " ==\n";
  std::size_t label = std::string("difference").size();
  for (auto v : variants) label = std::max(label, std::string(to_string(v)).size());
  std::vector<std::size_t> widths;
  for (const auto& c : s.courses) widths.push_back(std::max<std::size_t>(c.course.size(), 8));

  auto cell = [&out](const std::string& text, std::size_t w) {
    out << " | " << std::string(w - std::min(w, text.size()), ' ') << text;
  };
  out << std::string(label, ' ');
  for (std::size_t i = 0; i < s.courses.size(); ++i) cell(s.courses[i].course, widths[i]);
  out << '\n';
  for (auto v : variants) {
    const std::string name = to_string(v);
    out << name << std::string(label - name.size(), ' ');
    for (std::size_t i = 0; i < s.courses.size(); ++i) cell(fixed3(s.courses[i].mape.at(v)), widths[i]);
    out << '\n';
  }
  const bool any_diff = std::any_of(s.courses.begin(), s.courses.end(),
                                    [](const CourseResult& c) { return c.difference.has_value(); });
  if (any_diff) {
    out << "difference" << std::string(label - 10, ' ');
    for (std::size_t i = 0; i < s.courses.size(); ++i) {
      const auto& d = s.courses[i].difference;
      cell(d ? fixed3(*d) : "-", widths[i]);
    }
    out << '\n';
  }
  out << '\n';
}

}  // namespace

void write_report_json(std::ostream& out, const EvalReport& report) {
  nlohmann::ordered_json j;
  j["format"] = "dlstm.report";
  j["version"] = 1;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.metadata) meta[k] = v;
  j["metadata"] = std::move(meta);
  nlohmann::ordered_json variants = nlohmann::ordered_json::array();
  for (auto v : report.variants) variants.push_back(to_string(v));
  j["variants"] = std::move(variants);
  j["test_begin"] = report.test_begin;
  j["test_end"] = report.test_end;
  nlohmann::ordered_json slices = nlohmann::ordered_json::array();
  slices.push_back(slice_json(report.overall, report.variants));
  for (const auto& s : report.slices) slices.push_back(slice_json(s, report.variants));
  j["slices"] = std::move(slices);
  out << j.dump(2) << '\n';
}

void write_report_text(std::ostream& out, const EvalReport& report) {
  out << "MAPE (%) per course, one-step-ahead on the test span\n";
  for (const auto& [k, v] : report.metadata) out << "  " << k << ": " << v << '\n';
  out << '\n';
  text_slice(out, report.overall, report.variants);
  for (const auto& s : report.slices) text_slice(out, s, report.variants);
}

}  // namespace dlstm
