// Command-line driver: simulate, ingest, train, evaluate, forecast,
// dump-weights.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dlstm/errors.hpp"
#include "dlstm/eval.hpp"
#include "dlstm/ingest.hpp"
#include "dlstm/models.hpp"
#include "dlstm/pipeline.hpp"
#include "dlstm/road_graph.hpp"
#include "dlstm/simulate.hpp"
#include "dlstm/spatial_weights.hpp"
#include "dlstm/timeutil.hpp"

namespace fs = std::filesystem;
using namespace dlstm;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  unsigned threads = 0;
};

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

SeriesMap load_speeds(const fs::path& p) {
  auto in = open_in(p);
  return read_speed_series(in);
}

// Accepts an interval index or an ISO-8601 time inside the panel.
std::size_t resolve_index(const std::string& text, const SpeedPanel& panel) {
  if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::stoull(text);
  }
  const Timestamp t = parse_iso8601(text);
  const Timestamp step = static_cast<Timestamp>(panel.interval_min) * 60;
  if (t < panel.start_time || (t - panel.start_time) % step != 0) {
    throw std::out_of_range("time " + text + " is not an interval boundary of the data");
  }
  const auto idx = static_cast<std::size_t>((t - panel.start_time) / step);
  if (idx >= panel.length()) throw std::out_of_range("time " + text + " is past the data");
  return idx;
}

// ---- simulate ----

struct SimulateArgs {
  std::optional<int> days, roads, interval;
  std::string shape;
};

void run_simulate(const Globals& g, const SimulateArgs& a) {
  ScenarioConfig cfg;
  if (!g.config.empty()) {
    auto in = open_in(g.config);
    cfg = read_scenario(in);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (a.days) cfg.days = *a.days;
  if (a.roads) cfg.n_roads = *a.roads;
  if (a.interval) cfg.interval_min = *a.interval;
  if (!a.shape.empty()) cfg.shape = parse_shape(a.shape);
  cfg.validate();

  const RoadGraph graph = generate_network(cfg);
  const GroundTruth truth = generate_speeds(cfg, graph);
  const auto records = emit_trajectories(truth, graph, cfg);

  const fs::path dir = g.out;
  { auto o = open_out(dir / "scenario.json"); write_scenario(o, cfg); }
  { auto o = open_out(dir / "topology.txt"); write_topology(o, graph); }
  { auto o = open_out(dir / "trajectories.csv"); write_trajectories(o, records); }
  { auto o = open_out(dir / "truth.csv"); write_speed_series(o, truth.speeds); }
  { auto o = open_out(dir / "incidents.csv"); write_incidents(o, truth.incidents); }
  std::cout << "simulated " << graph.size() << " roads, " << cfg.total_steps() << " intervals, "
            << records.size() << " traversals, " << truth.incidents.size() << " incidents -> "
            << dir.string() << '\n';
}

// ---- ingest ----

struct IngestArgs {
  std::string topology, trajectories, scenario, start, end;
  int interval = 1;
};

void run_ingest(const Globals& g, const IngestArgs& a) {
  const RoadGraph graph = load_topology_file(a.topology);
  TimeSpan span;
  int interval = a.interval;
  if (!a.scenario.empty()) {
    auto in = open_in(a.scenario);
    const ScenarioConfig cfg = read_scenario(in);
    span = cfg.span();
    interval = cfg.interval_min;
  }
  if (!a.start.empty()) span.start = parse_iso8601(a.start);
  if (!a.end.empty()) span.end = parse_iso8601(a.end);
  if (span.end <= span.start) {
    throw std::invalid_argument("ingest needs a time span: pass --scenario or --start/--end");
  }
  auto in = open_in(a.trajectories);
  const auto records = read_trajectories(in);
  AggregateStats stats;
  const SeriesMap series = ingest_records(records, graph, interval, span, &stats);
  auto o = open_out(fs::path(g.out) / "speeds.csv");
  write_speed_series(o, series);
  std::cout << "ingested " << stats.used << " traversals (" << stats.dropped_outside_span
            << " outside span) into " << series.size() << " series\n";
}

// ---- train ----

struct DataArgs {
  std::string topology, speeds;
};

struct TrainArgs {
  DataArgs data;
  std::vector<std::string> variants{"baseline1", "baseline2", "proposed"};
  double train_fraction = 0.8;
  std::optional<int> epochs;
};

void run_train(const Globals& g, const TrainArgs& a) {
  std::vector<ModelVariant> variants;
  for (const auto& name : a.variants) variants.push_back(parse_variant(name));
  TrainConfig cfg;
  if (!g.config.empty()) {
    auto in = open_in(g.config);
    cfg = read_train_config(in);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (a.epochs) cfg.max_epochs = *a.epochs;
  cfg.validate();

  RoadGraph graph = load_topology_file(a.data.topology);
  const SeriesMap speeds = load_speeds(a.data.speeds);
  const std::size_t length = speeds.empty() ? 0 : speeds.begin()->second.size();
  const PreparedData data =
      prepare(std::move(graph), speeds, split_index(length, a.train_fraction), cfg.unit_time_min);
  for (const ModelVariant v : variants) {
    const Bundle b = train_bundle(v, data, cfg, g.threads);
    const fs::path dir = fs::path(g.out) / to_string(v);
    save_bundle(dir, b);
    std::cout << "trained " << to_string(v) << " on " << b.models.size() << " roads -> "
              << dir.string() << '\n';
  }
}

// ---- evaluate ----

struct EvaluateArgs {
  DataArgs data;
  std::vector<std::string> bundles;
  std::string incidents;
  bool include_imputed = false;
  std::vector<std::string> series_roads;
};

PreparedData prepare_for(const Bundle& b, const DataArgs& d) {
  RoadGraph graph = load_topology_file(d.topology);
  const SeriesMap speeds = load_speeds(d.speeds);
  PreparedData data = prepare(std::move(graph), speeds, b.train_end, b.unit_time_min);
  if (data.panel.length() != b.data_length || data.panel.start_time != b.data_start) {
    throw std::invalid_argument("speed data does not match the span the bundle was trained on");
  }
  return data;
}

void run_evaluate(const Globals& g, const EvaluateArgs& a) {
  std::vector<Bundle> bundles;
  for (const auto& dir : a.bundles) bundles.push_back(load_bundle(dir));
  const PreparedData data = prepare_for(bundles.front(), a.data);
  std::vector<Incident> incidents;
  if (!a.incidents.empty()) {
    auto in = open_in(a.incidents);
    incidents = read_incidents(in);
  }
  EvalOptions opts;
  opts.exclude_imputed = !a.include_imputed;
  const EvalReport report = evaluate_bundles(bundles, data, incidents, opts);

  const fs::path dir = g.out;
  { auto o = open_out(dir / "report.json"); write_report_json(o, report); }
  { auto o = open_out(dir / "report.txt"); write_report_text(o, report); }
  write_report_text(std::cout, report);

  for (const auto& road : a.series_roads) {
    const std::size_t begin = data.train_end + static_cast<std::size_t>(bundles.front().config.window);
    for (const auto& b : bundles) {
      const auto it = b.models.find(road);
      if (it == b.models.end()) throw UnknownIdError("no model for road '" + road + "'", road);
      const auto rows = export_series(it->second, data.panel, data.scaling, begin, data.panel.length());
      auto o = open_out(dir / ("series_" + std::string(to_string(b.variant)) + "_" + road + ".csv"));
      write_series_csv(o, rows);
    }
  }
}

// ---- forecast ----

struct ForecastArgs {
  DataArgs data;
  std::string bundle, start;
  int steps = 10;
};

void run_forecast(const Globals& g, const ForecastArgs& a) {
  const Bundle b = load_bundle(a.bundle);
  const PreparedData data = prepare_for(b, a.data);
  const std::size_t start = resolve_index(a.start, data.panel);
  const auto preds = rolling_forecast(b.models, data.graph, data.panel, b.scaling, start, a.steps);
  auto o = open_out(fs::path(g.out) / "forecast.csv");
  o << "road_id,timestamp,step,predicted_kmh,actual_kmh\n";
  o.precision(17);
  for (std::size_t r = 0; r < data.panel.road_count(); ++r) {
    const auto& id = data.panel.road_ids[r];
    const auto& p = preds.at(id);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const std::size_t t = start + k;
      o << id << ',' << format_iso8601(data.panel.time_at(t)) << ',' << k + 1 << ',' << p[k] << ',';
      if (t < data.panel.length() && data.panel.observed[r][t]) o << data.panel.kmh[r][t];
      o << '\n';
    }
  }
  std::cout << "forecast " << a.steps << " steps from " << format_iso8601(data.panel.time_at(start))
            << " for " << preds.size() << " roads\n";
}

// ---- dump-weights ----

struct DumpArgs {
  DataArgs data;
  std::vector<std::string> at;
  double unit_time = 0.0;
};

void run_dump(const Globals& g, const DumpArgs& a) {
  const RoadGraph graph = load_topology_file(a.data.topology);
  const SeriesMap speeds = load_speeds(a.data.speeds);
  const SpeedPanel panel = make_panel(graph, speeds, a.unit_time);
  std::vector<std::size_t> times;
  for (const auto& s : a.at) times.push_back(resolve_index(s, panel));
  if (times.empty()) times.push_back(0);
  for (std::size_t t : times) {
    std::vector<double> v(panel.road_count());
    for (std::size_t r = 0; r < v.size(); ++r) v[r] = panel.kmh[r][t];
    const WeightMatrix m = build_matrix(graph, v, panel.unit_time_min, t);
    auto o = open_out(fs::path(g.out) / ("weights_" + std::to_string(t) + ".csv"));
    write_matrix_csv(o, m);
  }
  std::cout << "wrote " << times.size() << " weight matrices\n";
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--topology", d.topology, "Topology file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--speeds", d.speeds, "Speed series CSV")->required()->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic speed forecasting with LSTMs and dynamic spatial weights"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides the config file)");
  app.add_option("--config", g.config, "Scenario (simulate) or training (train) config JSON");
  app.add_option("-o,--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads for training (0 = hardware)");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic network, speeds and trajectories");
  c_sim->add_option("--days", sim.days, "Simulated days");
  c_sim->add_option("--roads", sim.roads, "Number of road segments");
  c_sim->add_option("--interval", sim.interval, "Interval length in minutes");
  c_sim->add_option("--shape", sim.shape, "chain or merge-tree");
  c_sim->callback([&] { run_simulate(g, sim); });

  IngestArgs ing;
  auto* c_ing = app.add_subcommand("ingest", "Aggregate trajectories into imputed speed series");
  c_ing->add_option("--topology", ing.topology)->required()->check(CLI::ExistingFile);
  c_ing->add_option("--trajectories", ing.trajectories)->required()->check(CLI::ExistingFile);
  c_ing->add_option("--scenario", ing.scenario, "Take span and interval from a scenario file")
      ->check(CLI::ExistingFile);
  c_ing->add_option("--start", ing.start, "Span start (ISO-8601)");
  c_ing->add_option("--end", ing.end, "Span end, exclusive (ISO-8601)");
  c_ing->add_option("--interval", ing.interval, "Interval length in minutes");
  c_ing->callback([&] { run_ingest(g, ing); });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train one model per road for each variant");
  add_data_options(c_tr, tr.data);
  c_tr->add_option("--variant", tr.variants, "baseline1, baseline2 and/or proposed");
  c_tr->add_option("--train-fraction", tr.train_fraction, "Leading share of intervals used for training");
  c_tr->add_option("--epochs", tr.epochs, "Maximum epochs");
  c_tr->callback([&] { run_train(g, tr); });

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score bundles on the test span");
  add_data_options(c_ev, ev.data);
  c_ev->add_option("--bundle", ev.bundles, "Bundle directory (repeatable)")->required();
  c_ev->add_option("--incidents", ev.incidents, "Incident CSV for incident/normal slices")
      ->check(CLI::ExistingFile);
  c_ev->add_flag("--include-imputed", ev.include_imputed, "Also score imputed targets");
  c_ev->add_option("--series", ev.series_roads, "Export predicted-vs-actual CSV for these roads");
  c_ev->callback([&] { run_evaluate(g, ev); });

  ForecastArgs fc;
  auto* c_fc = app.add_subcommand("forecast", "Rolling multi-step forecast");
  add_data_options(c_fc, fc.data);
  c_fc->add_option("--bundle", fc.bundle)->required();
  c_fc->add_option("--start", fc.start, "Interval index or ISO-8601 time")->required();
  c_fc->add_option("--steps", fc.steps)->check(CLI::PositiveNumber);
  c_fc->callback([&] { run_forecast(g, fc); });

  DumpArgs dw;
  auto* c_dw = app.add_subcommand("dump-weights", "Write spatial weight matrices as CSV");
  add_data_options(c_dw, dw.data);
  c_dw->add_option("--at", dw.at, "Interval index or ISO-8601 time (repeatable)");
  c_dw->add_option("--unit-time", dw.unit_time, "Coverage time in minutes (0 = one interval)");
  c_dw->callback([&] { run_dump(g, dw); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
