#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dlstm/ingest.hpp"
#include "dlstm/neural.hpp"
#include "dlstm/road_graph.hpp"

namespace dlstm {

// Baseline1: own speed history. Baseline2: every road's speed history.
// Proposed: own speed history plus the column total of the spatial weight
// matrix for the road.
enum class ModelVariant { Baseline1, Baseline2, Proposed };

const char* to_string(ModelVariant v);
ModelVariant parse_variant(std::string_view text);  // throws std::invalid_argument
int input_dim(ModelVariant v, std::size_t road_count);

struct TrainConfig {
  int hidden_dim = 10;
  int window = 10;
  int horizon = 1;
  int batch_size = 32;
  AdaDeltaConfig adadelta{};
  int max_epochs = 50;
  int patience = 1;
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;
  // Coverage radius time for the spatial weights; <= 0 means "one interval".
  double unit_time_min = 0.0;

  void validate() const;  // throws std::invalid_argument
};

// Raw per-road inputs over one contiguous span, in graph order. Speeds must
// be imputed (strictly positive); column totals are computed from the same
// speeds at every interval.
struct SpeedPanel {
  std::vector<std::string> road_ids;
  Timestamp start_time = 0;
  int interval_min = 1;
  double unit_time_min = 1.0;
  std::vector<std::vector<double>> kmh;           // [road][t]
  std::vector<std::vector<bool>> observed;        // [road][t]
  std::vector<std::vector<double>> column_total;  // [road][t]

  std::size_t road_count() const noexcept { return road_ids.size(); }
  std::size_t length() const noexcept { return kmh.empty() ? 0 : kmh.front().size(); }
  std::size_t road_index(std::string_view id) const;  // throws UnknownIdError
  Timestamp time_at(std::size_t t) const {
    return start_time + static_cast<Timestamp>(t) * interval_min * 60;
  }
};

// Every graph road must be present in `series`, imputed and aligned.
SpeedPanel make_panel(const RoadGraph& graph, const SeriesMap& series, double unit_time_min);

// Min-max scaling of both feature kinds, fitted on the training prefix
// [0, train_end) only. A constant column-total history (e.g. a road that
// never has a neighbour in coverage) gets a unit-width range.
struct FeatureScaling {
  Normalizer speed;
  std::map<std::string, MinMax> spatial;
};

FeatureScaling fit_scaling(const SpeedPanel& panel, std::size_t train_end);

// s x input_dim matrix whose row j describes interval t - s + j.
// Throws std::out_of_range when t < s or t > panel length.
RowMatrix build_features(ModelVariant variant, std::size_t road, const SpeedPanel& panel,
                         const FeatureScaling& scaling, std::size_t t, int window);

struct DatasetOptions {
  int window = 10;
  int horizon = 1;
  bool observed_targets_only = false;
};

// One sample per window lying inside [begin, end) with its target also
// inside; ordered by time. Throws std::invalid_argument when empty.
std::vector<Sample> make_dataset(ModelVariant variant, std::size_t road, const SpeedPanel& panel,
                                 const FeatureScaling& scaling, std::size_t begin,
                                 std::size_t end, const DatasetOptions& options);

// Patience-based early stopping on validation loss. update() returns true
// once `patience` consecutive epochs have failed to improve on the best.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  bool update(double validation_loss);
  bool improved() const noexcept { return improved_; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }
  int epochs_seen() const noexcept { return epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  bool improved_ = false;
  double best_loss_;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainedModel {
  ModelVariant variant = ModelVariant::Baseline1;
  std::string road_id;
  int window = 10;
  LstmParams params;
  OptState optimizer;
  MinMax target_scale;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// Mini-batch AdaDelta on batch-mean MAPE. Each epoch shuffles the training
// samples with a generator seeded from config.seed; the final partial batch
// is kept. Stops after `patience` epochs without a validation improvement
// (or at max_epochs) and restores the best-validation parameters.
// Throws NumericError on divergence.
TrainedModel train(ModelVariant variant, const std::string& road_id, const TrainConfig& config,
                   const std::vector<Sample>& train_set, const std::vector<Sample>& validation_set,
                   const MinMax& target_scale);

// Denormalised one-step prediction in km/h. Stateless across calls.
double predict_one(const TrainedModel& model, const RowMatrix& features);

// Per-road seed derived from the run seed so roads train independently.
std::uint64_t road_seed(std::uint64_t seed, std::string_view road_id);

// Trains one model per road on the training prefix [0, train_end). The last
// validation_fraction of that prefix (by target time) is held out for early
// stopping. Roads run on up to `threads` workers; results do not depend on
// the thread count.
std::map<std::string, TrainedModel> train_variant(ModelVariant variant, const SpeedPanel& panel,
                                                  const FeatureScaling& scaling,
                                                  std::size_t train_end, const TrainConfig& config,
                                                  unsigned threads = 0);

// Predicts intervals start .. start + steps - 1 for every road, feeding each
// step's predictions back as history. Spatial column totals are rebuilt from
// the predicted speeds. `models` must hold one model of the same variant per
// panel road. Errors are rethrown with the failing step index.
std::map<std::string, std::vector<double>> rolling_forecast(
    const std::map<std::string, TrainedModel>& models, const RoadGraph& graph,
    const SpeedPanel& panel, const FeatureScaling& scaling, std::size_t start, int steps);

}  // namespace dlstm
