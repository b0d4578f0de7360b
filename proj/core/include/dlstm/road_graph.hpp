#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dlstm {

struct RoadSegment {
  std::string id;
  double length_km = 0.0;
  int lanes = 1;
};

// A named ordered sequence of segments, e.g. "C->Toll3". Consecutive
// segments must be joined by a directed edge.
struct Route {
  std::string name;
  std::vector<std::string> segments;
};

// Position of road k relative to road l. Behind means traffic on k flows
// toward l; Ahead means traffic on l flows toward k.
enum class RelativePosition { Behind, Ahead, Unrelated };

const char* to_string(RelativePosition p);

struct EdgeSpec {
  std::string from;
  std::string to;
};

// Directed road network. Immutable after construction; all-pairs directed
// distances are computed once in the constructor.
//
// Distances are measured midpoint to midpoint along a directed path: half
// the first segment, every intermediate segment in full, half the last.
class RoadGraph {
 public:
  RoadGraph() = default;
  // Throws UnknownIdError for dangling edge/route references and
  // std::invalid_argument for any other invariant violation.
  RoadGraph(std::vector<RoadSegment> segments, const std::vector<EdgeSpec>& edges,
            std::vector<Route> routes);

  std::size_t size() const noexcept { return segments_.size(); }
  const std::vector<RoadSegment>& segments() const noexcept { return segments_; }
  const RoadSegment& segment(std::size_t i) const { return segments_.at(i); }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept {
    return edges_;
  }
  const std::vector<Route>& routes() const noexcept { return routes_; }
  const std::vector<std::size_t>& successors(std::size_t i) const { return succ_.at(i); }
  const std::vector<std::size_t>& predecessors(std::size_t i) const { return pred_.at(i); }

  bool contains(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;  // throws UnknownIdError
  std::vector<std::string> ids() const;

  // Shortest directed from -> to distance, nullopt when unreachable.
  std::optional<double> directed_distance(std::size_t from, std::size_t to) const;

  // Shortest distance over either direction; nullopt when neither direction
  // has a path. path_distance(x, x) == 0.
  std::optional<double> path_distance(std::size_t a, std::size_t b) const;
  std::optional<double> path_distance(std::string_view a, std::string_view b) const;

  // When both directions exist the shorter one wins; ties resolve to Behind.
  // A road is Unrelated to itself.
  RelativePosition relative_position(std::size_t k, std::size_t l) const;
  RelativePosition relative_position(std::string_view k, std::string_view l) const;

  // Distance along the directed path that defines relative_position(k, l);
  // nullopt when Unrelated.
  std::optional<double> positional_distance(std::size_t k, std::size_t l) const;

  // True when k != l and k lies within v_l * unit_time distance of l in
  // either direction.
  bool in_coverage(std::size_t k, std::size_t l, double speed_kmh,
                   double unit_time_min) const;

  // Roads reachable from l within one unit of time at speed v_l, excluding
  // l itself. Returned in graph order.
  std::vector<std::string> coverage(std::string_view l, double speed_kmh,
                                    double unit_time_min) const;

 private:
  std::vector<RoadSegment> segments_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<Route> routes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> succ_;
  std::vector<std::vector<std::size_t>> pred_;
  std::vector<double> dist_;  // row-major n*n, +inf when unreachable
};

// Topology text format:
//
//   # comment
//   [segments]
//   <id> <length_km> <lanes>
//   [edges]
//   <from_id> <to_id>
//   [routes]
//   <route name>: <id> <id> ...
//
// Blank lines and lines starting with '#' are ignored. Ids are whitespace-free
// tokens; route names may contain anything except ':'.
RoadGraph load_topology(std::istream& in);
RoadGraph load_topology_file(const std::string& path);
void write_topology(std::ostream& out, const RoadGraph& graph);

}  // namespace dlstm
