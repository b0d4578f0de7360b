#include "dlstm/spatial_weights.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "dlstm/errors.hpp"
#include "text_util.hpp"

namespace dlstm {
namespace {

void check_speeds(const RoadGraph& graph, std::span<const double> speeds) {
  if (speeds.size() != graph.size()) {
    throw DomainError("expected " + std::to_string(graph.size()) + " speeds, got " +
                      std::to_string(speeds.size()));
  }
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    if (!(speeds[i] > 0.0) || !std::isfinite(speeds[i])) {
      throw DomainError("non-positive or missing speed for road '" + graph.segment(i).id + "'");
    }
  }
}

// Weight of k on l for a validated snapshot.
double pair_weight(const RoadGraph& graph, std::span<const double> speeds, std::size_t k,
                   std::size_t l, double unit_time_min) {
  if (k == l) return 0.0;
  const bool covered = graph.in_coverage(k, l, speeds[l], unit_time_min);
  if (!covered) return 0.0;
  const auto position = graph.relative_position(k, l);
  const auto d = graph.positional_distance(k, l);
  return weight_entry(speeds[l], speeds[k], d.value_or(0.0), position, covered);
}

double sum_column(const Eigen::MatrixXd& m, Eigen::Index l) {
  double sum = 0.0;
  for (Eigen::Index k = 0; k < m.rows(); ++k) sum += m(k, l);
  return sum;
}

}  // namespace

double weight_entry(double v_l, double v_k, double d_lk, RelativePosition position,
                    bool in_coverage) {
  if (!(v_l > 0.0)) throw DomainError("weight_entry: v_l must be positive");
  if (!in_coverage || position == RelativePosition::Unrelated) return 0.0;
  if (!(d_lk > 0.0)) throw DomainError("weight_entry: distance must be positive");
  const double diff = position == RelativePosition::Behind ? v_l - v_k : v_k - v_l;
  return diff / v_l * (1.0 / d_lk);
}

WeightMatrix build_matrix(const RoadGraph& graph, std::span<const double> speeds_kmh,
                          double unit_time_min, std::size_t time_index) {
  if (!(unit_time_min > 0.0)) throw std::invalid_argument("unit time must be > 0");
  check_speeds(graph, speeds_kmh);
  const std::size_t n = graph.size();
  WeightMatrix m;
  m.time_index = time_index;
  m.road_ids = graph.ids();
  m.entries = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t k = 0; k < n; ++k) {
      m.entries(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) =
          pair_weight(graph, speeds_kmh, k, l, unit_time_min);
    }
  }
  m.column_totals.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index l = 0; l < m.column_totals.size(); ++l) {
    m.column_totals(l) = sum_column(m.entries, l);
  }
  return m;
}

double column_total(const WeightMatrix& m, const std::string& road_id) {
  for (std::size_t i = 0; i < m.road_ids.size(); ++i) {
    if (m.road_ids[i] == road_id) {
      return sum_column(m.entries, static_cast<Eigen::Index>(i));
    }
  }
  throw UnknownIdError(road_id);
}

Eigen::VectorXd column_totals(const RoadGraph& graph, std::span<const double> speeds_kmh,
                              double unit_time_min) {
  if (!(unit_time_min > 0.0)) throw std::invalid_argument("unit time must be > 0");
  check_speeds(graph, speeds_kmh);
  const std::size_t n = graph.size();
  Eigen::VectorXd totals(static_cast<Eigen::Index>(n));
  for (std::size_t l = 0; l < n; ++l) {
    // Same summation order as sum_column().
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += pair_weight(graph, speeds_kmh, k, l, unit_time_min);
    totals(static_cast<Eigen::Index>(l)) = sum;
  }
  return totals;
}

std::vector<std::vector<double>> column_total_series(
    const RoadGraph& graph, const std::vector<std::vector<double>>& speeds,
    double unit_time_min) {
  const std::size_t n = graph.size();
  if (speeds.size() != n) throw DomainError("speed panel does not match graph size");
  const std::size_t steps = n == 0 ? 0 : speeds.front().size();
  std::vector<std::vector<double>> out(n, std::vector<double>(steps, 0.0));
  std::vector<double> snapshot(n);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) snapshot[i] = speeds[i].at(t);
    const Eigen::VectorXd totals = column_totals(graph, snapshot, unit_time_min);
    for (std::size_t i = 0; i < n; ++i) out[i][t] = totals(static_cast<Eigen::Index>(i));
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const WeightMatrix& m) {
  out << "k_id,l_id,weight\n";
  const auto n = static_cast<Eigen::Index>(m.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index l = 0; l < n; ++l) {
      const double w = m.entries(k, l);
      if (w == 0.0) continue;
      out << m.road_ids[static_cast<std::size_t>(k)] << ','
          << m.road_ids[static_cast<std::size_t>(l)] << ',' << detail::format_double(w) << '\n';
    }
  }
}

}  // namespace dlstm
