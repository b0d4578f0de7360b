#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dlstm/models.hpp"
#include "dlstm/road_graph.hpp"
#include "dlstm/simulate.hpp"

namespace dlstm {

using ModelSet = std::map<std::string, TrainedModel>;
using VariantModels = std::map<ModelVariant, ModelSet>;

// A named subset of intervals, possibly different per road: mask[road][t]
// over the whole panel.
struct EvalSlice {
  std::string name;
  std::map<std::string, std::vector<bool>> mask;
};

struct EvalOptions {
  bool exclude_imputed = true;  // skip targets that were filled, not measured
};

struct CourseResult {
  std::string course;
  std::vector<std::string> roads;
  std::map<ModelVariant, double> mape;
  // Best baseline MAPE minus Proposed MAPE; set when both kinds are present.
  std::optional<double> difference;
};

struct RoadResult {
  std::size_t samples = 0;
  std::map<ModelVariant, double> mape;
};

struct SliceResult {
  std::string name;
  std::map<std::string, RoadResult> roads;  // roads with no samples are absent
  std::vector<CourseResult> courses;
};

struct EvalReport {
  std::vector<ModelVariant> variants;
  std::size_t test_begin = 0;
  std::size_t test_end = 0;
  SliceResult overall;
  std::vector<SliceResult> slices;
  std::map<std::string, std::string> metadata;
};

// One-step-ahead (teacher-forced) evaluation on targets in
// [test_begin + window, test_end): inputs come from observed history, never
// from predictions. Course MAPE is the unweighted mean of member-road MAPEs.
// Within a slice, roads without samples are skipped; a course with no
// sampled road throws DomainError. Missing models throw UnknownIdError.
EvalReport evaluate(const VariantModels& models, const SpeedPanel& panel,
                    const FeatureScaling& scaling, std::size_t test_begin, std::size_t test_end,
                    const std::vector<Route>& courses, const std::vector<EvalSlice>& slices = {},
                    const EvalOptions& options = {});

// "incident" marks, for each road, the intervals during which an incident is
// active on that road or on a road at most `hops` edges upstream, extended by
// `hops` intervals to cover the delayed recovery; "normal" is the
// complement.
std::vector<EvalSlice> incident_slices(std::span<const Incident> incidents, const RoadGraph& graph,
                                       const SpeedPanel& panel, int hops = 2);

struct SeriesRow {
  Timestamp time = 0;
  double actual_kmh = 0.0;
  double predicted_kmh = 0.0;
  bool observed = true;
};

// Teacher-forced predictions for every interval in [begin, end).
// Throws std::out_of_range when the span leaves the panel or lacks history.
std::vector<SeriesRow> export_series(const TrainedModel& model, const SpeedPanel& panel,
                                     const FeatureScaling& scaling, std::size_t begin,
                                     std::size_t end);

// CSV: timestamp,actual_kmh,predicted_kmh,observed
void write_series_csv(std::ostream& out, std::span<const SeriesRow> rows);

// Rolling (fed-back) evaluation: from every `stride`-th origin in the test
// range, forecasts `steps` intervals ahead and scores each horizon.
struct RollingReport {
  ModelVariant variant = ModelVariant::Baseline1;
  int steps = 1;
  std::map<std::string, std::vector<double>> road_mape_by_step;
};

RollingReport evaluate_rolling(const ModelSet& models, const RoadGraph& graph,
                               const SpeedPanel& panel, const FeatureScaling& scaling,
                               std::size_t test_begin, std::size_t test_end, int steps,
                               std::size_t stride, const EvalOptions& options = {});

void write_report_json(std::ostream& out, const EvalReport& report);
void write_report_text(std::ostream& out, const EvalReport& report);

}  // namespace dlstm
