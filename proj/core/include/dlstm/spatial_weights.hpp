#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dlstm/road_graph.hpp"

namespace dlstm {

// Snapshot of the localised dynamic spatial weight matrix at one interval.
// entry(k, l) is the influence of road k on road l; the diagonal is zero and
// every out-of-coverage pair is zero.
struct WeightMatrix {
  std::size_t time_index = 0;
  std::vector<std::string> road_ids;  // graph order
  Eigen::MatrixXd entries;
  Eigen::VectorXd column_totals;

  std::size_t size() const noexcept { return road_ids.size(); }
};

// Relative-speed weight of road k on road l:
//   Behind: (v_l - v_k) / v_l / d
//   Ahead:  (v_k - v_l) / v_l / d
// and 0 when k is outside l's coverage or unrelated to it.
// Throws DomainError for v_l <= 0 or d <= 0 on an in-coverage related pair.
double weight_entry(double v_l, double v_k, double d_lk, RelativePosition position,
                    bool in_coverage);

// `speeds_kmh` is indexed in graph order. unit_time_min sets the coverage
// radius v_l * unit_time. Throws DomainError on a missing or non-positive
// speed.
WeightMatrix build_matrix(const RoadGraph& graph, std::span<const double> speeds_kmh,
                          double unit_time_min, std::size_t time_index = 0);

double column_total(const WeightMatrix& m, const std::string& road_id);

// Column totals for every road at every interval without materialising the
// matrices. speeds[road][t] in km/h; result has the same shape.
std::vector<std::vector<double>> column_total_series(
    const RoadGraph& graph, const std::vector<std::vector<double>>& speeds,
    double unit_time_min);

// Column totals for one snapshot; same values as build_matrix().column_totals.
Eigen::VectorXd column_totals(const RoadGraph& graph, std::span<const double> speeds_kmh,
                              double unit_time_min);

// CSV `k_id,l_id,weight`, zero entries omitted.
void write_matrix_csv(std::ostream& out, const WeightMatrix& m);

}  // namespace dlstm
