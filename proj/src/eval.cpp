#include "jmqr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "jmqr/losses.hpp"

namespace jmqr {

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_bundle_against(const ForecastBundle& bundle, const Tensor& y, const QuantileLevels& levels) {
  bundle.validate(levels.size());
  require_same_shape(bundle.mean, y, "targets vs mean prediction");
  if (y.rank() == 0 || y.dim(0) == 0) throw std::invalid_argument("evaluation needs at least one sample");
}

}  // namespace

PointMetrics point_metrics(const Tensor& y, const Tensor& y_hat) {
  require_same_shape(y, y_hat, "point_metrics");
  if (y.empty()) throw std::invalid_argument("point_metrics: empty input");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - y_hat[i];
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  const double n = static_cast<double>(y.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

double tilted_test_loss(const ForecastBundle& bundle, const Tensor& y, const QuantileLevels& levels) {
  if (levels.empty()) throw std::invalid_argument("tilted_test_loss: no quantile levels");
  check_bundle_against(bundle, y, levels);
  const std::size_t count = levels.size();
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      total += tilted(levels[j], y[i] - bundle.quantiles[i * count + j]);
    }
  }
  return total / static_cast<double>(y.dim(0));
}

CrossingMetrics crossing_metrics(const ForecastBundle& bundle, const QuantileLevels& levels) {
  if (levels.size() < 2) throw std::invalid_argument("crossing_metrics: needs at least two levels");
  bundle.validate(levels.size());
  const std::size_t count = levels.size();
  CrossingMetrics out;
  const std::size_t points = bundle.quantiles.size() / count;
  for (std::size_t i = 0; i < points; ++i) {
    for (std::size_t j = 0; j + 1 < count; ++j) {
      const double gap = bundle.quantiles[i * count + j] - bundle.quantiles[i * count + j + 1];
      if (gap > 0.0) {
        out.crossing_loss += gap;
        ++out.num_crosses;
      }
    }
  }
  return out;
}

std::string IntervalPair::percent() const {
  const double pct = std::round(nominal() * 1000.0) / 10.0;
  std::ostringstream os;
  os << pct << '%';
  return os.str();
}

std::vector<IntervalPair> IntervalPair::parse_list(const std::string& text) {
  std::vector<IntervalPair> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("interval '" + item + "' must look like lower:upper, e.g. 0.05:0.95");
    }
    IntervalPair p;
    try {
      std::size_t used = 0;
      const std::string lo = item.substr(0, colon), hi = item.substr(colon + 1);
      p.lower = std::stod(lo, &used);
      if (used != lo.size()) throw std::invalid_argument(lo);
      p.upper = std::stod(hi, &used);
      if (used != hi.size()) throw std::invalid_argument(hi);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("interval '" + item + "' has a non-numeric bound");
    }
    if (!(p.lower > 0.0 && p.lower < p.upper && p.upper < 1.0)) {
      throw std::invalid_argument("interval '" + item + "' needs 0 < lower < upper < 1");
    }
    out.push_back(p);
  }
  if (out.empty()) throw std::invalid_argument("empty interval list");
  return out;
}

IntervalMetrics interval_metrics(const Tensor& lower, const Tensor& upper, const Tensor& y) {
  require_same_shape(lower, y, "interval lower bound");
  require_same_shape(upper, y, "interval upper bound");
  if (y.empty()) throw std::invalid_argument("interval_metrics: empty input");
  std::size_t inside = 0;
  double width = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (lower[i] <= y[i] && y[i] <= upper[i]) ++inside;
    width += upper[i] - lower[i];
  }
  const double n = static_cast<double>(y.size());
  return {static_cast<double>(inside) / n, width / n};
}

std::vector<std::pair<std::string, double>> MetricsReport::columns() const {
  std::vector<std::pair<std::string, double>> out{{"MAE", point.mae}, {"RMSE", point.rmse}};
  if (tilted_total) out.emplace_back("Tilted Loss", *tilted_total);
  if (crossing) {
    out.emplace_back("Crossing Loss", crossing->crossing_loss);
    out.emplace_back("Num. Crosses", static_cast<double>(crossing->num_crosses));
  }
  for (const auto& r : intervals) {
    out.emplace_back("ICP " + r.pair.percent(), r.metrics.icp);
    out.emplace_back("MIL " + r.pair.percent(), r.metrics.mil);
  }
  return out;
}

MetricsReport evaluate_bundle(const ForecastBundle& bundle, const Tensor& y,
                              const QuantileLevels& levels,
                              const std::vector<IntervalPair>& intervals) {
  check_bundle_against(bundle, y, levels);
  MetricsReport report;
  report.points = y.size();
  report.point = point_metrics(y, bundle.mean);
  if (!levels.empty()) report.tilted_total = tilted_test_loss(bundle, y, levels);
  if (levels.size() >= 2) report.crossing = crossing_metrics(bundle, levels);
  for (const IntervalPair& pair : intervals) {
    if (levels.empty()) {
      throw std::invalid_argument("interval " + pair.percent() +
                                  " requested but the model has no quantile heads (mean-only)");
    }
    std::size_t lo = 0, hi = 0;
    try {
      lo = levels.index_of(pair.lower);
      hi = levels.index_of(pair.upper);
    } catch (const std::exception&) {
      throw std::invalid_argument("interval " + format_number(pair.lower) + ":" +
                                  format_number(pair.upper) +
                                  " needs quantile heads the model does not have");
    }
    report.intervals.push_back({pair, interval_metrics(bundle.quantile(lo), bundle.quantile(hi), y)});
  }
  return report;
}

double AggregatedReport::mean_of(const std::string& column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw std::out_of_range("report has no column '" + column + "'");
  return mean[static_cast<std::size_t>(it - columns.begin())];
}

double AggregatedReport::std_of(const std::string& column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw std::out_of_range("report has no column '" + column + "'");
  return stddev[static_cast<std::size_t>(it - columns.begin())];
}

AggregatedReport aggregate_repeats(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_repeats: no reports");
  AggregatedReport out;
  const auto first = reports.front().columns();
  for (const auto& [name, value] : first) out.columns.push_back(name);
  const std::size_t cols = out.columns.size();
  std::vector<std::vector<double>> values(cols);
  for (const MetricsReport& r : reports) {
    const auto c = r.columns();
    if (c.size() != cols) throw std::invalid_argument("aggregate_repeats: reports have different columns");
    for (std::size_t k = 0; k < cols; ++k) {
      if (c[k].first != out.columns[k]) {
        throw std::invalid_argument("aggregate_repeats: column '" + c[k].first + "' does not match '" +
                                    out.columns[k] + "'");
      }
      values[k].push_back(c[k].second);
    }
  }
  const double n = static_cast<double>(reports.size());
  for (std::size_t k = 0; k < cols; ++k) {
    double m = 0.0;
    for (double v : values[k]) m += v;
    m /= n;
    double ss = 0.0;
    for (double v : values[k]) ss += (v - m) * (v - m);
    out.mean.push_back(m);
    out.stddev.push_back(reports.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
  }
  out.repeats = reports.size();
  return out;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["mae"] = report.point.mae;
  j["rmse"] = report.point.rmse;
  j["points"] = report.points;
  if (report.tilted_total) j["tilted_loss"] = *report.tilted_total;
  if (report.crossing) {
    j["crossing_loss"] = report.crossing->crossing_loss;
    j["num_crosses"] = report.crossing->num_crosses;
  }
  j["intervals"] = nlohmann::json::array();
  for (const auto& r : report.intervals) {
    j["intervals"].push_back({{"label", r.pair.percent()},
                              {"lower", r.pair.lower},
                              {"upper", r.pair.upper},
                              {"nominal", r.pair.nominal()},
                              {"icp", r.metrics.icp},
                              {"mil", r.metrics.mil}});
  }
  return j;
}

nlohmann::json to_json(const AggregatedReport& report) {
  nlohmann::json j;
  j["repeats"] = report.repeats;
  j["metrics"] = nlohmann::json::array();
  for (std::size_t k = 0; k < report.columns.size(); ++k) {
    j["metrics"].push_back({{"name", report.columns[k]}, {"mean", report.mean[k]}, {"std", report.stddev[k]}});
  }
  return j;
}

AggregatedReport aggregated_from_json(const nlohmann::json& j) {
  AggregatedReport out;
  out.repeats = j.at("repeats").get<std::size_t>();
  for (const auto& m : j.at("metrics")) {
    out.columns.push_back(m.at("name").get<std::string>());
    out.mean.push_back(m.at("mean").get<double>());
    out.stddev.push_back(m.at("std").get<double>());
  }
  return out;
}

std::string report_csv(const std::vector<std::pair<std::string, AggregatedReport>>& models) {
  std::vector<std::string> header;
  for (const auto& [name, rep] : models) {
    for (const auto& c : rep.columns) {
      if (std::find(header.begin(), header.end(), c) == header.end()) header.push_back(c);
    }
  }
  std::ostringstream os;
  os << "model,repeats";
  for (const auto& c : header) os << ',' << c << ',' << c << " std";
  os << '\n';
  for (const auto& [name, rep] : models) {
    os << name << ',' << rep.repeats;
    for (const auto& c : header) {
      const auto it = std::find(rep.columns.begin(), rep.columns.end(), c);
      if (it == rep.columns.end()) {
        os << ",,";
      } else {
        const std::size_t k = static_cast<std::size_t>(it - rep.columns.begin());
        os << ',' << format_number(rep.mean[k]) << ',' << format_number(rep.stddev[k]);
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace jmqr
