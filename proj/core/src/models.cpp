#include "dlstm/models.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>

#include "dlstm/errors.hpp"
#include "dlstm/spatial_weights.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace dlstm {
namespace {

using detail::splitmix64;

// Per-road scaling resolved to panel order once, so feature assembly does no
// map lookups.
struct ScaledView {
  const SpeedPanel& panel;
  std::vector<MinMax> speed;
  std::vector<MinMax> spatial;

  ScaledView(const SpeedPanel& p, const FeatureScaling& scaling) : panel(p) {
    speed.reserve(p.road_count());
    spatial.reserve(p.road_count());
    for (const auto& id : p.road_ids) {
      speed.push_back(scaling.speed.range(id));
      const auto it = scaling.spatial.find(id);
      if (it == scaling.spatial.end()) throw UnknownIdError(id);
      spatial.push_back(it->second);
    }
  }
};

template <typename SpeedAt, typename SpatialAt>
RowMatrix assemble(ModelVariant variant, std::size_t road, std::size_t n, int window,
                   SpeedAt speed_at, SpatialAt spatial_at) {
  RowMatrix x(window, input_dim(variant, n));
  for (int j = 0; j < window; ++j) {
    switch (variant) {
      case ModelVariant::Baseline1:
        x(j, 0) = speed_at(road, j);
        break;
      case ModelVariant::Baseline2:
        for (std::size_t k = 0; k < n; ++k) x(j, static_cast<Eigen::Index>(k)) = speed_at(k, j);
        break;
      case ModelVariant::Proposed:
        x(j, 0) = speed_at(road, j);
        x(j, 1) = spatial_at(road, j);
        break;
    }
  }
  return x;
}

RowMatrix panel_features(ModelVariant variant, std::size_t road, const ScaledView& view,
                         std::size_t t, int window) {
  const auto& p = view.panel;
  if (road >= p.road_count()) throw std::out_of_range("road index out of range");
  if (window < 1 || t < static_cast<std::size_t>(window) || t > p.length()) {
    throw std::out_of_range("insufficient history for a window ending at interval " +
                            std::to_string(t));
  }
  const std::size_t first = t - static_cast<std::size_t>(window);
  return assemble(
      variant, road, p.road_count(), window,
      [&](std::size_t r, int j) { return view.speed[r].normalize(p.kmh[r][first + j]); },
      [&](std::size_t r, int j) { return view.spatial[r].normalize(p.column_total[r][first + j]); });
}

}  // namespace

const char* to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Baseline1: return "baseline1";
    case ModelVariant::Baseline2: return "baseline2";
    case ModelVariant::Proposed: return "proposed";
  }
  return "?";
}

ModelVariant parse_variant(std::string_view text) {
  if (text == "baseline1") return ModelVariant::Baseline1;
  if (text == "baseline2") return ModelVariant::Baseline2;
  if (text == "proposed") return ModelVariant::Proposed;
  throw std::invalid_argument("unknown model variant '" + std::string(text) + "'");
}

int input_dim(ModelVariant v, std::size_t road_count) {
  switch (v) {
    case ModelVariant::Baseline1: return 1;
    case ModelVariant::Baseline2: return static_cast<int>(road_count);
    case ModelVariant::Proposed: return 2;
  }
  return 0;
}

void TrainConfig::validate() const {
  if (hidden_dim < 1 || window < 1 || horizon < 1 || batch_size < 1 || max_epochs < 1 ||
      patience < 1) {
    throw std::invalid_argument("train config counts must all be >= 1");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in (0, 1)");
  }
}

std::size_t SpeedPanel::road_index(std::string_view id) const {
  const auto it = std::find(road_ids.begin(), road_ids.end(), id);
  if (it == road_ids.end()) throw UnknownIdError(std::string(id));
  return static_cast<std::size_t>(it - road_ids.begin());
}

SpeedPanel make_panel(const RoadGraph& graph, const SeriesMap& series, double unit_time_min) {
  if (graph.size() == 0) throw std::invalid_argument("empty road graph");
  SpeedPanel panel;
  panel.road_ids = graph.ids();
  const auto first = series.find(panel.road_ids.front());
  if (first == series.end()) throw UnknownIdError(panel.road_ids.front());
  panel.start_time = first->second.start_time;
  panel.interval_min = first->second.interval_min;
  panel.unit_time_min = unit_time_min > 0.0 ? unit_time_min : panel.interval_min;
  const std::size_t len = first->second.size();

  for (const auto& id : panel.road_ids) {
    const auto it = series.find(id);
    if (it == series.end()) throw UnknownIdError("no speed series for road '" + id + "'", id);
    const SpeedSeries& s = it->second;
    if (s.start_time != panel.start_time || s.interval_min != panel.interval_min ||
        s.size() != len) {
      throw std::invalid_argument("speed series for road '" + id + "' is not aligned");
    }
    for (double v : s.values) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError("speed series for road '" + id + "' is not imputed/positive");
      }
    }
    panel.kmh.push_back(s.values);
    panel.observed.push_back(s.observed);
  }
  panel.column_total = column_total_series(graph, panel.kmh, panel.unit_time_min);
  return panel;
}

FeatureScaling fit_scaling(const SpeedPanel& panel, std::size_t train_end) {
  if (train_end == 0 || train_end > panel.length()) {
    throw std::invalid_argument("training prefix is empty or exceeds the panel");
  }
  std::map<std::string, MinMax> speed;
  std::map<std::string, MinMax> spatial;
  for (std::size_t r = 0; r < panel.road_count(); ++r) {
    const auto& id = panel.road_ids[r];
    const auto sb = panel.kmh[r].begin();
    const auto [slo, shi] = std::minmax_element(sb, sb + static_cast<std::ptrdiff_t>(train_end));
    if (!(*shi > *slo)) throw DomainError("constant training series for road '" + id + "'");
    speed.emplace(id, MinMax{*slo, *shi});

    const auto cb = panel.column_total[r].begin();
    const auto [clo, chi] = std::minmax_element(cb, cb + static_cast<std::ptrdiff_t>(train_end));
    spatial.emplace(id, *chi > *clo ? MinMax{*clo, *chi} : MinMax{*clo, *clo + 1.0});
  }
  return FeatureScaling{Normalizer(std::move(speed)), std::move(spatial)};
}

RowMatrix build_features(ModelVariant variant, std::size_t road, const SpeedPanel& panel,
                         const FeatureScaling& scaling, std::size_t t, int window) {
  return panel_features(variant, road, ScaledView(panel, scaling), t, window);
}

std::vector<Sample> make_dataset(ModelVariant variant, std::size_t road, const SpeedPanel& panel,
                                 const FeatureScaling& scaling, std::size_t begin,
                                 std::size_t end, const DatasetOptions& options) {
  if (end > panel.length()) throw std::out_of_range("dataset range exceeds the panel");
  if (road >= panel.road_count()) throw std::out_of_range("road index out of range");
  if (options.window < 1 || options.horizon < 1) {
    throw std::invalid_argument("window and horizon must be >= 1");
  }
  const ScaledView view(panel, scaling);
  const auto s = static_cast<std::size_t>(options.window);
  const auto h = static_cast<std::size_t>(options.horizon);
  std::vector<Sample> out;
  // Window covers [w - s, w); the target sits at w + h - 1.
  for (std::size_t w = begin + s; w + h - 1 < end; ++w) {
    const std::size_t target = w + h - 1;
    if (options.observed_targets_only && !panel.observed[road][target]) continue;
    Sample sample;
    sample.inputs = panel_features(variant, road, view, w, options.window);
    sample.target = view.speed[road].normalize(panel.kmh[road][target]);
    sample.road_id = panel.road_ids[road];
    sample.time_index = target;
    out.push_back(std::move(sample));
  }
  if (out.empty()) throw std::invalid_argument("dataset range yields no samples");
  return out;
}

EarlyStopping::EarlyStopping(int patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

bool EarlyStopping::update(double validation_loss) {
  ++epoch_;
  improved_ = validation_loss < best_loss_;
  if (improved_) {
    best_loss_ = validation_loss;
    best_epoch_ = epoch_;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

TrainedModel train(ModelVariant variant, const std::string& road_id, const TrainConfig& config,
                   const std::vector<Sample>& train_set, const std::vector<Sample>& validation_set,
                   const MinMax& target_scale) {
  config.validate();
  if (train_set.empty() || validation_set.empty()) {
    throw std::invalid_argument("training and validation sets must be non-empty");
  }
  const auto dim = static_cast<int>(train_set.front().inputs.cols());

  TrainedModel model;
  model.variant = variant;
  model.road_id = road_id;
  model.window = config.window;
  model.target_scale = target_scale;
  model.params = init_params(dim, config.hidden_dim, config.seed);
  model.optimizer = OptState::for_params(model.params, config.adadelta);

  LstmParams params = model.params;
  OptState opt = model.optimizer;
  std::vector<Sample> work = train_set;
  std::mt19937_64 shuffle_rng(splitmix64(config.seed));
  EarlyStopping stopper(config.patience);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(work.begin(), work.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t first = 0; first < work.size(); first += batch) {
      const std::size_t len = std::min(batch, work.size() - first);
      const std::span<const Sample> chunk(work.data() + first, len);
      const BackwardResult r = backward(params, chunk, target_scale);
      if (!std::isfinite(r.loss)) {
        throw NumericError("training diverged for road '" + road_id + "' in epoch " +
                           std::to_string(epoch));
      }
      loss_sum += r.loss * static_cast<double>(len);
      adadelta_step(opt, params, r.grads);
    }
    const double train_loss = loss_sum / static_cast<double>(work.size());
    const double val_loss = batch_loss(params, validation_set, target_scale);
    if (!std::isfinite(val_loss)) {
      throw NumericError("validation loss is not finite for road '" + road_id + "' in epoch " +
                         std::to_string(epoch));
    }
    model.history.push_back(EpochRecord{epoch, train_loss, val_loss});
    const bool stop = stopper.update(val_loss);
    if (stopper.improved()) {
      model.params = params;
      model.optimizer = opt;
    }
    if (stop) break;
  }
  model.best_epoch = stopper.best_epoch();
  return model;
}

double predict_one(const TrainedModel& model, const RowMatrix& features) {
  if (features.cols() != model.params.input_dim || features.rows() != model.window) {
    throw std::invalid_argument("feature shape " + std::to_string(features.rows()) + "x" +
                                std::to_string(features.cols()) + " does not match model " +
                                std::to_string(model.window) + "x" +
                                std::to_string(model.params.input_dim));
  }
  return model.target_scale.denormalize(lstm_forward(model.params, features));
}

std::uint64_t road_seed(std::uint64_t seed, std::string_view road_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : road_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ h);
}

std::map<std::string, TrainedModel> train_variant(ModelVariant variant, const SpeedPanel& panel,
                                                  const FeatureScaling& scaling,
                                                  std::size_t train_end, const TrainConfig& config,
                                                  unsigned threads) {
  config.validate();
  if (train_end > panel.length()) throw std::invalid_argument("training prefix exceeds panel");
  const auto held_out = static_cast<std::size_t>(
      std::floor(config.validation_fraction * static_cast<double>(train_end)));
  const std::size_t val_start = train_end - std::max<std::size_t>(held_out, 1);

  std::vector<TrainedModel> slots(panel.road_count());
  detail::parallel_for(panel.road_count(), threads, [&](std::size_t r) {
    const auto& id = panel.road_ids[r];
    auto all = make_dataset(variant, r, panel, scaling, 0, train_end,
                            DatasetOptions{config.window, config.horizon, true});
    std::vector<Sample> fit_set;
    std::vector<Sample> val_set;
    for (auto& s : all) (s.time_index < val_start ? fit_set : val_set).push_back(std::move(s));
    all.clear();
    if (fit_set.empty() || val_set.empty()) {
      throw std::invalid_argument("road '" + id + "' has no samples on one side of the validation split");
    }
    TrainConfig cfg = config;
    cfg.seed = road_seed(config.seed, id);
    slots[r] = train(variant, id, cfg, fit_set, val_set, scaling.speed.range(id));
  });

  std::map<std::string, TrainedModel> out;
  for (auto& m : slots) {
    auto key = m.road_id;
    out.emplace(std::move(key), std::move(m));
  }
  return out;
}

std::map<std::string, std::vector<double>> rolling_forecast(
    const std::map<std::string, TrainedModel>& models, const RoadGraph& graph,
    const SpeedPanel& panel, const FeatureScaling& scaling, std::size_t start, int steps) {
  if (steps < 1) throw std::invalid_argument("rolling forecast needs at least one step");
  if (graph.ids() != panel.road_ids) {
    throw std::invalid_argument("graph and panel road order differ");
  }
  const std::size_t n = panel.road_count();
  std::vector<const TrainedModel*> per_road(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto it = models.find(panel.road_ids[r]);
    if (it == models.end()) {
      throw UnknownIdError("no model for road '" + panel.road_ids[r] + "'", panel.road_ids[r]);
    }
    per_road[r] = &it->second;
  }
  const ModelVariant variant = per_road.front()->variant;
  const int window = per_road.front()->window;
  for (const auto* m : per_road) {
    if (m->variant != variant || m->window != window) {
      throw std::invalid_argument("rolling forecast needs models of one variant and window");
    }
  }
  const auto s = static_cast<std::size_t>(window);
  if (start < s || start > panel.length()) {
    throw std::out_of_range("rolling forecast start lacks a full history window");
  }

  const ScaledView view(panel, scaling);
  std::vector<std::deque<double>> speed_hist(n);
  std::vector<std::deque<double>> spatial_hist(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t t = start - s; t < start; ++t) {
      speed_hist[r].push_back(panel.kmh[r][t]);
      spatial_hist[r].push_back(panel.column_total[r][t]);
    }
  }

  std::map<std::string, std::vector<double>> out;
  for (const auto& id : panel.road_ids) out[id].reserve(static_cast<std::size_t>(steps));
  std::vector<double> preds(n);
  for (int step = 0; step < steps; ++step) {
    try {
      for (std::size_t r = 0; r < n; ++r) {
        const RowMatrix x = assemble(
            variant, r, n, window,
            [&](std::size_t k, int j) { return view.speed[k].normalize(speed_hist[k][j]); },
            [&](std::size_t k, int j) { return view.spatial[k].normalize(spatial_hist[k][j]); });
        preds[r] = predict_one(*per_road[r], x);
      }
      Eigen::VectorXd totals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      if (variant == ModelVariant::Proposed) {
        totals = column_totals(graph, preds, panel.unit_time_min);
      }
      for (std::size_t r = 0; r < n; ++r) {
        speed_hist[r].pop_front();
        speed_hist[r].push_back(preds[r]);
        spatial_hist[r].pop_front();
        spatial_hist[r].push_back(totals(static_cast<Eigen::Index>(r)));
        out[panel.road_ids[r]].push_back(preds[r]);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("rolling forecast failed at step " + std::to_string(step + 1) +
                               ": " + e.what());
    }
  }
  return out;
}

}  // namespace dlstm
