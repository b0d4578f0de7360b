#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dlstm/eval.hpp"
#include "dlstm/ingest.hpp"
#include "dlstm/models.hpp"
#include "dlstm/road_graph.hpp"
#include "dlstm/simulate.hpp"

namespace dlstm {

// Graph, imputed panel and feature scaling for one train/test split.
struct PreparedData {
  RoadGraph graph;
  SpeedPanel panel;
  std::size_t train_end = 0;  // first test interval
  FeatureScaling scaling;
};

// Imputed series for every road; `stats` receives the aggregation summary.
SeriesMap ingest_records(std::span<const TraversalRecord> records, const RoadGraph& graph,
                         int interval_min, TimeSpan span, AggregateStats* stats = nullptr);

// Splits at `train_end` (an interval index) and fits scaling on the prefix.
PreparedData prepare(RoadGraph graph, const SeriesMap& imputed, std::size_t train_end,
                     double unit_time_min = 0.0);

// floor(fraction * length), rejected when either side would be empty.
std::size_t split_index(std::size_t length, double train_fraction);

// FNV-1a (64-bit, hex) over road ids and speed/observed values in
// [begin, end).
std::string panel_hash(const SpeedPanel& panel, std::size_t begin, std::size_t end);

// Everything needed to reload a trained variant for evaluation.
struct Bundle {
  ModelVariant variant = ModelVariant::Baseline1;
  TrainConfig config;
  FeatureScaling scaling;
  std::vector<std::string> road_ids;
  Timestamp data_start = 0;
  int interval_min = 1;
  double unit_time_min = 1.0;
  std::size_t data_length = 0;
  std::size_t train_end = 0;
  std::string train_hash;
  ModelSet models;
};

Bundle train_bundle(ModelVariant variant, const PreparedData& data, const TrainConfig& config,
                    unsigned threads = 0);

// Directory layout: manifest.json plus one checkpoint per road
// (road_<id>.json). Throws std::runtime_error on I/O failure, ParseError on
// malformed content.
void save_bundle(const std::filesystem::path& dir, const Bundle& bundle);
Bundle load_bundle(const std::filesystem::path& dir);

// Evaluates every bundle on the test span of `data`, optionally with
// incident/normal slices. Bundles must share the split and training data.
EvalReport evaluate_bundles(std::span<const Bundle> bundles, const PreparedData& data,
                            std::span<const Incident> incidents = {},
                            const EvalOptions& options = {});

// Training config file: JSON object mirroring TrainConfig (adadelta as
// "rho"/"eps"); missing keys keep defaults, unknown keys are rejected.
TrainConfig read_train_config(std::istream& in);
void write_train_config(std::ostream& out, const TrainConfig& config);
std::string config_hash(const TrainConfig& config);

}  // namespace dlstm
