#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jmqr/forecast.hpp"
#include "jmqr/tensor.hpp"

namespace jmqr {

struct PointMetrics {
  double mae = 0.0;
  double rmse = 0.0;
};

PointMetrics point_metrics(const Tensor& y, const Tensor& y_hat);

/// Tilted loss summed over cells and levels, averaged over the leading (test sample) axis.
/// y: N x [cells...]; bundle.quantiles: N x [cells...] x J.
double tilted_test_loss(const ForecastBundle& bundle, const Tensor& y, const QuantileLevels& levels);

struct CrossingMetrics {
  double crossing_loss = 0.0;    // sum of max(0, q_j - q_{j+1}) over points and adjacent pairs
  std::size_t num_crosses = 0;   // adjacent pairs with q_j strictly above q_{j+1}
};

/// Needs at least two levels.
CrossingMetrics crossing_metrics(const ForecastBundle& bundle, const QuantileLevels& levels);

struct IntervalPair {
  double lower = 0.05;
  double upper = 0.95;

  double nominal() const { return upper - lower; }
  /// "90%" for (0.05, 0.95).
  std::string percent() const;
  /// Parses "0.05:0.95,0.1:0.9".
  static std::vector<IntervalPair> parse_list(const std::string& text);
};

struct IntervalMetrics {
  double icp = 0.0;
  double mil = 0.0;
};

/// Inclusive coverage and mean width of [lower, upper].
IntervalMetrics interval_metrics(const Tensor& lower, const Tensor& upper, const Tensor& y);

struct IntervalResult {
  IntervalPair pair;
  IntervalMetrics metrics;
};

struct MetricsReport {
  PointMetrics point;
  std::optional<double> tilted_total;
  std::optional<CrossingMetrics> crossing;
  std::vector<IntervalResult> intervals;
  std::size_t points = 0;  // number of (sample, cell) targets evaluated

  /// Flat (column label, value) view in table order.
  std::vector<std::pair<std::string, double>> columns() const;
};

/// Computes every metric the bundle supports. Requested intervals must be available levels.
MetricsReport evaluate_bundle(const ForecastBundle& bundle, const Tensor& y,
                              const QuantileLevels& levels,
                              const std::vector<IntervalPair>& intervals);

struct AggregatedReport {
  std::vector<std::string> columns;
  std::vector<double> mean;
  std::vector<double> stddev;  // sample std (n - 1); 0 when n = 1
  std::size_t repeats = 0;

  double mean_of(const std::string& column) const;
  double std_of(const std::string& column) const;
};

AggregatedReport aggregate_repeats(const std::vector<MetricsReport>& reports);

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const AggregatedReport& report);
AggregatedReport aggregated_from_json(const nlohmann::json& j);

/// One row per model: model,repeats,<col>,<col> std,...
std::string report_csv(const std::vector<std::pair<std::string, AggregatedReport>>& models);

}  // namespace jmqr
