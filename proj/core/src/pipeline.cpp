#include "dlstm/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dlstm/errors.hpp"
#include "json.hpp"

namespace dlstm {
namespace {

using nlohmann::ordered_json;

constexpr const char* kManifestFormat = "dlstm.bundle";
constexpr int kManifestVersion = 1;

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void text(const std::string& s) { bytes(s.data(), s.size() + 1); }
  void number(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    bytes(&bits, sizeof bits);
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

ordered_json config_json(const TrainConfig& c) {
  ordered_json j;
  j["hidden_dim"] = c.hidden_dim;
  j["window"] = c.window;
  j["horizon"] = c.horizon;
  j["batch_size"] = c.batch_size;
  j["rho"] = c.adadelta.rho;
  j["eps"] = c.adadelta.eps;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["validation_fraction"] = c.validation_fraction;
  j["unit_time_min"] = c.unit_time_min;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "hidden_dim") c.hidden_dim = value.get<int>();
      else if (key == "window") c.window = value.get<int>();
      else if (key == "horizon") c.horizon = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "rho") c.adadelta.rho = value.get<double>();
      else if (key == "eps") c.adadelta.eps = value.get<double>();
      else if (key == "max_epochs") c.max_epochs = value.get<int>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "validation_fraction") c.validation_fraction = value.get<double>();
      else if (key == "unit_time_min") c.unit_time_min = value.get<double>();
      else throw ParseError("unknown train config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad train config value: ") + e.what());
  }
  c.validate();
  return c;
}

ordered_json ranges_json(const std::map<std::string, MinMax>& ranges) {
  ordered_json j = ordered_json::object();
  for (const auto& [road, r] : ranges) j[road] = {r.min, r.max};
  return j;
}

std::map<std::string, MinMax> ranges_from_json(const nlohmann::json& j) {
  std::map<std::string, MinMax> out;
  for (const auto& [road, pair] : j.items()) {
    out.emplace(road, MinMax{pair.at(0).get<double>(), pair.at(1).get<double>()});
  }
  return out;
}

std::string checkpoint_name(std::size_t index, const std::string& road) {
  std::string safe;
  for (char c : road) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_';
    safe.push_back(ok ? c : '_');
  }
  return "road_" + std::to_string(index) + "_" + safe + ".json";
}

}  // namespace

SeriesMap ingest_records(std::span<const TraversalRecord> records, const RoadGraph& graph,
                         int interval_min, TimeSpan span, AggregateStats* stats) {
  AggregateResult agg = aggregate_speeds(records, graph, interval_min, span);
  if (stats) *stats = agg.stats;
  SeriesMap out;
  for (auto& [road, s] : agg.series) out.emplace(road, impute(std::move(s)));
  return out;
}

std::size_t split_index(std::size_t length, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0, 1)");
  }
  const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(length)));
  if (cut == 0) throw std::invalid_argument("split leaves an empty training set");
  if (cut >= length) throw std::invalid_argument("split leaves an empty test set");
  return cut;
}

PreparedData prepare(RoadGraph graph, const SeriesMap& imputed, std::size_t train_end,
                     double unit_time_min) {
  PreparedData data;
  data.panel = make_panel(graph, imputed, unit_time_min);
  if (train_end == 0 || train_end >= data.panel.length()) {
    throw std::invalid_argument("train/test boundary must leave both sides non-empty");
  }
  data.train_end = train_end;
  data.scaling = fit_scaling(data.panel, train_end);
  data.graph = std::move(graph);
  return data;
}

std::string panel_hash(const SpeedPanel& panel, std::size_t begin, std::size_t end) {
  Fnv1a h;
  for (std::size_t r = 0; r < panel.road_count(); ++r) {
    h.text(panel.road_ids[r]);
    for (std::size_t t = begin; t < end && t < panel.length(); ++t) {
      h.number(panel.kmh[r][t]);
      const unsigned char o = panel.observed[r][t] ? 1 : 0;
      h.bytes(&o, 1);
    }
  }
  return h.hex();
}

std::string config_hash(const TrainConfig& config) {
  Fnv1a h;
  h.text(config_json(config).dump());
  return h.hex();
}

Bundle train_bundle(ModelVariant variant, const PreparedData& data, const TrainConfig& config,
                    unsigned threads) {
  Bundle b;
  b.variant = variant;
  b.config = config;
  b.scaling = data.scaling;
  b.road_ids = data.panel.road_ids;
  b.data_start = data.panel.start_time;
  b.interval_min = data.panel.interval_min;
  b.unit_time_min = data.panel.unit_time_min;
  b.data_length = data.panel.length();
  b.train_end = data.train_end;
  b.train_hash = panel_hash(data.panel, 0, data.train_end);
  b.models = train_variant(variant, data.panel, data.scaling, data.train_end, config, threads);
  return b;
}

void save_bundle(const std::filesystem::path& dir, const Bundle& b) {
  std::filesystem::create_directories(dir);
  ordered_json manifest;
  manifest["format"] = kManifestFormat;
  manifest["version"] = kManifestVersion;
  manifest["variant"] = to_string(b.variant);
  manifest["config"] = config_json(b.config);
  manifest["road_ids"] = b.road_ids;
  manifest["data"] = {{"start", format_iso8601(b.data_start)},
                      {"interval_min", b.interval_min},
                      {"unit_time_min", b.unit_time_min},
                      {"length", b.data_length},
                      {"train_end", b.train_end},
                      {"train_hash", b.train_hash}};
  manifest["normalizer"] = {{"speed", ranges_json(b.scaling.speed.ranges())},
                            {"spatial", ranges_json(b.scaling.spatial)}};
  ordered_json models = ordered_json::array();
  for (std::size_t i = 0; i < b.road_ids.size(); ++i) {
    const auto& road = b.road_ids[i];
    const auto it = b.models.find(road);
    if (it == b.models.end()) throw UnknownIdError("bundle lacks a model for '" + road + "'", road);
    const TrainedModel& m = it->second;
    const std::string file = checkpoint_name(i, road);
    std::ofstream out(dir / file);
    if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
    write_checkpoint(out, m.params, &m.optimizer);
    if (!out) throw std::runtime_error("failed writing " + (dir / file).string());

    ordered_json history = ordered_json::array();
    for (const auto& e : m.history) {
      history.push_back({{"epoch", e.epoch}, {"train", e.train_loss}, {"validation", e.validation_loss}});
    }
    models.push_back({{"road_id", road},
                      {"checkpoint", file},
                      {"window", m.window},
                      {"target_scale", {m.target_scale.min, m.target_scale.max}},
                      {"best_epoch", m.best_epoch},
                      {"history", std::move(history)}});
  }
  manifest["models"] = std::move(models);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Bundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open bundle manifest in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kManifestFormat || j.at("version") != kManifestVersion) {
      throw ParseError("unsupported bundle manifest");
    }
    Bundle b;
    b.variant = parse_variant(j.at("variant").get<std::string>());
    b.config = config_from_json(j.at("config"));
    b.road_ids = j.at("road_ids").get<std::vector<std::string>>();
    const auto& d = j.at("data");
    b.data_start = parse_iso8601(d.at("start").get<std::string>());
    b.interval_min = d.at("interval_min").get<int>();
    b.unit_time_min = d.at("unit_time_min").get<double>();
    b.data_length = d.at("length").get<std::size_t>();
    b.train_end = d.at("train_end").get<std::size_t>();
    b.train_hash = d.at("train_hash").get<std::string>();
    b.scaling.speed = Normalizer(ranges_from_json(j.at("normalizer").at("speed")));
    b.scaling.spatial = ranges_from_json(j.at("normalizer").at("spatial"));
    for (const auto& mj : j.at("models")) {
      TrainedModel m;
      m.variant = b.variant;
      m.road_id = mj.at("road_id").get<std::string>();
      m.window = mj.at("window").get<int>();
      m.target_scale = MinMax{mj.at("target_scale").at(0).get<double>(),
                              mj.at("target_scale").at(1).get<double>()};
      m.best_epoch = mj.at("best_epoch").get<int>();
      for (const auto& e : mj.at("history")) {
        m.history.push_back(EpochRecord{e.at("epoch").get<int>(), e.at("train").get<double>(),
                                        e.at("validation").get<double>()});
      }
      const auto path = dir / mj.at("checkpoint").get<std::string>();
      std::ifstream ck_in(path);
      if (!ck_in) throw std::runtime_error("cannot open checkpoint " + path.string());
      Checkpoint ck = read_checkpoint(ck_in);
      m.params = std::move(ck.params);
      m.optimizer = ck.optimizer ? std::move(*ck.optimizer) : OptState::for_params(m.params);
      auto key = m.road_id;
      b.models.emplace(std::move(key), std::move(m));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed bundle manifest: ") + e.what());
  }
}

EvalReport evaluate_bundles(std::span<const Bundle> bundles, const PreparedData& data,
                            std::span<const Incident> incidents, const EvalOptions& options) {
  if (bundles.empty()) throw std::invalid_argument("no bundles to evaluate");
  const std::string hash = panel_hash(data.panel, 0, data.train_end);
  VariantModels models;
  for (const auto& b : bundles) {
    if (b.train_end != data.train_end || b.train_hash != hash || b.road_ids != data.panel.road_ids) {
      throw std::invalid_argument(std::string("bundle for ") + to_string(b.variant) +
                                  " was trained on different data or split");
    }
    if (!models.emplace(b.variant, b.models).second) {
      throw std::invalid_argument(std::string("duplicate bundle for ") + to_string(b.variant));
    }
  }

  std::vector<EvalSlice> slices;
  if (!incidents.empty()) slices = incident_slices(incidents, data.graph, data.panel);
  const auto& scaling = bundles.front().scaling;
  EvalReport report = evaluate(models, data.panel, scaling, data.train_end, data.panel.length(),
                               data.graph.routes(), slices, options);

  report.metadata["data_start"] = format_iso8601(data.panel.time_at(0));
  report.metadata["data_end"] = format_iso8601(data.panel.time_at(data.panel.length()));
  report.metadata["test_start"] = format_iso8601(data.panel.time_at(data.train_end));
  report.metadata["train_hash"] = hash;
  report.metadata["test_hash"] = panel_hash(data.panel, data.train_end, data.panel.length());
  for (const auto& b : bundles) {
    const std::string v = to_string(b.variant);
    report.metadata["seed." + v] = std::to_string(b.config.seed);
    report.metadata["config_hash." + v] = config_hash(b.config);
  }
  return report;
}

TrainConfig read_train_config(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

void write_train_config(std::ostream& out, const TrainConfig& config) {
  out << config_json(config).dump(2) << '\n';
}

}  // namespace dlstm
