#include "dlstm/road_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "dlstm/errors.hpp"

namespace dlstm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string at_line(int line) { return " (line " + std::to_string(line) + ")"; }

}  // namespace

const char* to_string(RelativePosition p) {
  switch (p) {
    case RelativePosition::Behind: return "behind";
    case RelativePosition::Ahead: return "ahead";
    case RelativePosition::Unrelated: return "unrelated";
  }
  return "?";
}

RoadGraph::RoadGraph(std::vector<RoadSegment> segments, const std::vector<EdgeSpec>& edges,
                     std::vector<Route> routes)
    : segments_(std::move(segments)), routes_(std::move(routes)) {
  const std::size_t n = segments_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = segments_[i];
    if (s.id.empty()) throw std::invalid_argument("segment with empty id");
    if (!(s.length_km > 0.0) || !std::isfinite(s.length_km)) {
      throw std::invalid_argument("segment '" + s.id + "' must have positive length");
    }
    if (s.lanes < 1) {
      throw std::invalid_argument("segment '" + s.id + "' must have at least one lane");
    }
    if (!index_.emplace(s.id, i).second) {
      throw std::invalid_argument("duplicate segment id '" + s.id + "'");
    }
  }

  succ_.assign(n, {});
  pred_.assign(n, {});
  for (const auto& e : edges) {
    const std::size_t from = index_of(e.from);
    const std::size_t to = index_of(e.to);
    if (from == to) throw std::invalid_argument("self-loop edge on '" + e.from + "'");
    if (std::find(succ_[from].begin(), succ_[from].end(), to) != succ_[from].end()) {
      continue;
    }
    edges_.emplace_back(from, to);
    succ_[from].push_back(to);
    pred_[to].push_back(from);
  }

  for (const auto& r : routes_) {
    if (r.segments.empty()) throw std::invalid_argument("route '" + r.name + "' is empty");
    for (std::size_t j = 0; j < r.segments.size(); ++j) {
      const std::size_t cur = index_of(r.segments[j]);
      if (j == 0) continue;
      const std::size_t prev = index_of(r.segments[j - 1]);
      const auto& s = succ_[prev];
      if (std::find(s.begin(), s.end(), cur) == s.end()) {
        throw std::invalid_argument("route '" + r.name + "' is disconnected between '" +
                                    r.segments[j - 1] + "' and '" + r.segments[j] + "'");
      }
    }
  }

  // Dijkstra from every source with edge weight (len_u + len_v) / 2.
  dist_.assign(n * n, kInf);
  using Item = std::pair<double, std::size_t>;
  for (std::size_t src = 0; src < n; ++src) {
    double* row = dist_.data() + src * n;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    row[src] = 0.0;
    heap.emplace(0.0, src);
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d > row[u]) continue;
      for (std::size_t v : succ_[u]) {
        const double nd = d + 0.5 * (segments_[u].length_km + segments_[v].length_km);
        if (nd < row[v]) {
          row[v] = nd;
          heap.emplace(nd, v);
        }
      }
    }
  }
}

bool RoadGraph::contains(std::string_view id) const {
  return index_.find(std::string(id)) != index_.end();
}

std::size_t RoadGraph::index_of(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw UnknownIdError(std::string(id));
  return it->second;
}

std::vector<std::string> RoadGraph::ids() const {
  std::vector<std::string> out;
  out.reserve(segments_.size());
  for (const auto& s : segments_) out.push_back(s.id);
  return out;
}

std::optional<double> RoadGraph::directed_distance(std::size_t from, std::size_t to) const {
  const std::size_t n = size();
  if (from >= n || to >= n) throw std::out_of_range("road index out of range");
  const double d = dist_[from * n + to];
  if (d == kInf) return std::nullopt;
  return d;
}

std::optional<double> RoadGraph::path_distance(std::size_t a, std::size_t b) const {
  const auto ab = directed_distance(a, b);
  const auto ba = directed_distance(b, a);
  if (ab && ba) return std::min(*ab, *ba);
  return ab ? ab : ba;
}

std::optional<double> RoadGraph::path_distance(std::string_view a, std::string_view b) const {
  return path_distance(index_of(a), index_of(b));
}

RelativePosition RoadGraph::relative_position(std::size_t k, std::size_t l) const {
  if (k >= size() || l >= size()) throw std::out_of_range("road index out of range");
  if (k == l) return RelativePosition::Unrelated;
  const auto kl = directed_distance(k, l);
  const auto lk = directed_distance(l, k);
  if (kl && lk) return *kl <= *lk ? RelativePosition::Behind : RelativePosition::Ahead;
  if (kl) return RelativePosition::Behind;
  if (lk) return RelativePosition::Ahead;
  return RelativePosition::Unrelated;
}

RelativePosition RoadGraph::relative_position(std::string_view k, std::string_view l) const {
  return relative_position(index_of(k), index_of(l));
}

std::optional<double> RoadGraph::positional_distance(std::size_t k, std::size_t l) const {
  switch (relative_position(k, l)) {
    case RelativePosition::Behind: return directed_distance(k, l);
    case RelativePosition::Ahead: return directed_distance(l, k);
    case RelativePosition::Unrelated: break;
  }
  return std::nullopt;
}

bool RoadGraph::in_coverage(std::size_t k, std::size_t l, double speed_kmh,
                            double unit_time_min) const {
  if (k == l || speed_kmh <= 0.0) return false;
  const auto d = path_distance(k, l);
  return d && *d <= speed_kmh * unit_time_min / 60.0;
}

std::vector<std::string> RoadGraph::coverage(std::string_view l, double speed_kmh,
                                             double unit_time_min) const {
  if (speed_kmh < 0.0) throw std::invalid_argument("coverage speed must be >= 0");
  if (!(unit_time_min > 0.0)) throw std::invalid_argument("unit time must be > 0");
  const std::size_t li = index_of(l);
  std::vector<std::string> out;
  for (std::size_t k = 0; k < size(); ++k) {
    if (in_coverage(k, li, speed_kmh, unit_time_min)) out.push_back(segments_[k].id);
  }
  return out;
}

RoadGraph load_topology(std::istream& in) {
  enum class Section { None, Segments, Edges, Routes } section = Section::None;
  std::vector<RoadSegment> segments;
  std::vector<EdgeSpec> edges;
  std::vector<Route> routes;

  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line == "[segments]") section = Section::Segments;
      else if (line == "[edges]") section = Section::Edges;
      else if (line == "[routes]") section = Section::Routes;
      else throw ParseError("unknown section '" + line + "'" + at_line(line_no));
      continue;
    }
    std::istringstream fields(line);
    switch (section) {
      case Section::None:
        throw ParseError("content before first section" + at_line(line_no));
      case Section::Segments: {
        RoadSegment s;
        std::string extra;
        if (!(fields >> s.id >> s.length_km >> s.lanes) || (fields >> extra)) {
          throw ParseError("expected '<id> <length_km> <lanes>'" + at_line(line_no));
        }
        segments.push_back(std::move(s));
        break;
      }
      case Section::Edges: {
        EdgeSpec e;
        std::string extra;
        if (!(fields >> e.from >> e.to) || (fields >> extra)) {
          throw ParseError("expected '<from_id> <to_id>'" + at_line(line_no));
        }
        edges.push_back(std::move(e));
        break;
      }
      case Section::Routes: {
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
          throw ParseError("expected '<name>: <ids...>'" + at_line(line_no));
        }
        Route r;
        r.name = trim(line.substr(0, colon));
        if (r.name.empty()) throw ParseError("route with empty name" + at_line(line_no));
        std::istringstream ids(line.substr(colon + 1));
        std::string id;
        while (ids >> id) r.segments.push_back(id);
        routes.push_back(std::move(r));
        break;
      }
    }
  }

  try {
    return RoadGraph(std::move(segments), edges, std::move(routes));
  } catch (const UnknownIdError& e) {
    throw UnknownIdError("dangling reference to unknown segment '" + e.id() + "'", e.id());
  }
}

RoadGraph load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file '" + path + "'");
  return load_topology(in);
}

void write_topology(std::ostream& out, const RoadGraph& graph) {
  out << "[segments]\n";
  const auto old_precision = out.precision(17);
  for (const auto& s : graph.segments()) {
    out << s.id << ' ' << s.length_km << ' ' << s.lanes << '\n';
  }
  out.precision(old_precision);
  out << "[edges]\n";
  for (const auto& [from, to] : graph.edges()) {
    out << graph.segment(from).id << ' ' << graph.segment(to).id << '\n';
  }
  out << "[routes]\n";
  for (const auto& r : graph.routes()) {
    out << r.name << ':';
    for (const auto& id : r.segments) out << ' ' << id;
    out << '\n';
  }
}

}  // namespace dlstm
