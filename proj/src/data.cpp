#include "jmqr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "jmqr/models.hpp"
#include "jmqr/tensor_io.hpp"

namespace jmqr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(t, &used);
    return used == t.size() && std::isfinite(out);
  } catch (const std::logic_error&) {
    return false;
  }
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

void warn(const std::string& msg, std::vector<std::string>* warnings) {
  std::cerr << "warning: " << msg << '\n';
  if (warnings) warnings->push_back(msg);
}

std::string cell_name(const Shape& cells, std::size_t flat) {
  if (cells.empty()) return "the scalar column";
  std::vector<std::size_t> idx(cells.size());
  for (std::size_t a = cells.size(); a-- > 0;) {
    idx[a] = flat % cells[a];
    flat /= cells[a];
  }
  std::string out = "cell (";
  for (std::size_t a = 0; a < idx.size(); ++a) out += (a ? ", " : "") + std::to_string(idx[a]);
  return out + ")";
}

}  // namespace

// ---------------------------------------------------------------------------- motorcycle

SeriesDataset parse_motorcycle(const std::string& text, std::vector<std::string>* warnings) {
  std::vector<double> xs, ys;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool seen_row = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    double a = 0.0, b = 0.0;
    const bool numeric = fields.size() == 2 && parse_double(fields[0], a) && parse_double(fields[1], b);
    if (!numeric) {
      if (!seen_row && fields.size() == 2 && !parse_double(fields[0], a)) {
        seen_row = true;  // header
        continue;
      }
      throw ParseError("line " + std::to_string(line_no) + ": expected two numeric columns, got '" +
                           trim(line) + "'",
                       line_no);
    }
    seen_row = true;
    xs.push_back(a);
    ys.push_back(b);
  }
  if (xs.empty()) throw ParseError("motorcycle file contains no records", 0);
  if (xs.size() != kMotorcycleRecords) {
    warn("motorcycle file has " + std::to_string(xs.size()) + " records, expected " +
             std::to_string(kMotorcycleRecords),
         warnings);
  }
  SeriesDataset ds;
  ds.x = Tensor::vector(std::move(xs));
  ds.y = Tensor::vector(std::move(ys));
  ds.metadata = {{"origin", "motorcycle"}, {"x_units", "ms"}, {"y_units", "g"}};
  return ds;
}

SeriesDataset load_motorcycle(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  SeriesDataset ds = parse_motorcycle(buf.str(), warnings);
  ds.metadata["path"] = path.string();
  return ds;
}

SeriesDataset motorcycle_surrogate(std::uint64_t seed, std::size_t count) {
  if (count == 0) throw std::invalid_argument("motorcycle_surrogate: count must be positive");
  Rng rng(seed);
  std::vector<double> xs(count), ys(count);
  for (double& t : xs) t = rng.uniform(2.4, 57.6);
  std::sort(xs.begin(), xs.end());
  for (std::size_t i = 0; i < count; ++i) {
    const double t = xs[i];
    double mean = 0.0;
    if (t > 14.0) mean = -220.0 * std::exp(-(t - 14.0) / 9.0) * std::sin(std::numbers::pi * (t - 14.0) / 12.0);
    const double sd = 2.0 + (t > 14.0 ? 28.0 * std::exp(-std::pow((t - 26.0) / 10.0, 2.0)) + 8.0 : 0.0);
    ys[i] = mean + sd * rng.normal();
  }
  SeriesDataset ds;
  ds.x = Tensor::vector(std::move(xs));
  ds.y = Tensor::vector(std::move(ys));
  ds.metadata = {{"origin", "motorcycle-surrogate"}, {"seed", seed}, {"x_units", "ms"}, {"y_units", "g"}};
  return ds;
}

// ---------------------------------------------------------------------------- synthetic grid

nlohmann::json GridSynthParams::to_json() const {
  return {{"rows", rows},         {"cols", cols},           {"steps", steps},
          {"period", period},     {"amplitude", amplitude}, {"noise_ratio", noise_ratio},
          {"day_factor", day_factor}};
}

GridSynthParams GridSynthParams::from_json(const nlohmann::json& j) {
  GridSynthParams p;
  for (const auto& [key, value] : j.items()) {
    if (key == "rows") p.rows = value.get<std::size_t>();
    else if (key == "cols") p.cols = value.get<std::size_t>();
    else if (key == "steps") p.steps = value.get<std::size_t>();
    else if (key == "period") p.period = value.get<double>();
    else if (key == "amplitude") p.amplitude = value.get<double>();
    else if (key == "noise_ratio") p.noise_ratio = value.get<double>();
    else if (key == "day_factor") p.day_factor = value.get<double>();
    else throw std::invalid_argument("unknown synthetic grid parameter '" + key + "'");
  }
  p.validate();
  return p;
}

void GridSynthParams::validate() const {
  if (rows == 0 || cols == 0 || steps == 0) {
    throw std::invalid_argument("synthetic grid extents must be positive, got " + std::to_string(rows) +
                                "x" + std::to_string(cols) + "x" + std::to_string(steps));
  }
  if (!(period > 0.0)) throw std::invalid_argument("synthetic grid period must be positive");
  if (!(noise_ratio >= 0.0)) throw std::invalid_argument("synthetic grid noise_ratio must be >= 0");
  if (!(day_factor > 0.0 && day_factor <= 1.0)) {
    throw std::invalid_argument("synthetic grid day_factor must lie in (0, 1]");
  }
}

std::vector<std::string> grid_preset_names() { return {"taxi", "copenhagen", "tiny"}; }

GridSynthParams grid_preset(const std::string& name) {
  GridSynthParams p;
  if (name == "taxi") return p;
  if (name == "copenhagen") {
    p.rows = 9;
    p.cols = 1;
    p.steps = 5000;
    return p;
  }
  if (name == "tiny") {
    p.rows = 4;
    p.cols = 4;
    p.steps = 400;
    return p;
  }
  std::string valid;
  for (const auto& n : grid_preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown preset '" + name + "'; valid presets: " + valid);
}

OracleQuantiles::OracleQuantiles(const GridSynthParams& params, std::uint64_t seed) : params_(params) {
  params_.validate();
  Rng rng(derive_seed(seed, 1));
  const std::size_t cells = params_.rows * params_.cols;
  for (std::size_t c = 0; c < cells; ++c) {
    const double m = static_cast<double>(c / params_.cols), n = static_cast<double>(c % params_.cols);
    base_.push_back(10.0 + 10.0 * rng.uniform());
    amp_.push_back(params_.amplitude * (0.7 + 0.6 * rng.uniform()));
    phase_.push_back(2.0 * std::numbers::pi * (0.07 * m + 0.04 * n) + 0.3 * (rng.uniform() - 0.5));
  }
}

double OracleQuantiles::signal(std::size_t m, std::size_t n, std::size_t t) const {
  const std::size_t c = m * params_.cols + n;
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / params_.period + phase_.at(c);
  return base_[c] + amp_[c] * std::sin(angle);
}

double OracleQuantiles::scale(std::size_t m, std::size_t n, std::size_t t) const {
  const std::size_t c = m * params_.cols + n;
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / params_.period + phase_.at(c);
  const double night = 0.5 * (1.0 + std::cos(angle));
  return params_.noise_ratio * amp_[c] * (params_.day_factor + (1.0 - params_.day_factor) * night);
}

double OracleQuantiles::quantile(std::size_t m, std::size_t n, std::size_t t, double tau) const {
  return signal(m, n, t) + scale(m, n, t) * normal_quantile(tau);
}

ForecastBundle OracleQuantiles::bundle(std::size_t t0, std::size_t count, const QuantileLevels& levels) const {
  const std::size_t rows = params_.rows, cols = params_.cols, j = levels.size();
  std::vector<double> z;
  for (double tau : levels) z.push_back(normal_quantile(tau));
  ForecastBundle b;
  b.mean = Tensor(Shape{count, rows, cols});
  b.quantiles = Tensor(Shape{count, rows, cols, j});
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t m = 0; m < rows; ++m) {
      for (std::size_t n = 0; n < cols; ++n) {
        const std::size_t flat = (i * rows + m) * cols + n;
        const double s = signal(m, n, t0 + i), g = scale(m, n, t0 + i);
        b.mean[flat] = s;
        for (std::size_t k = 0; k < j; ++k) b.quantiles[flat * j + k] = s + g * z[k];
      }
    }
  }
  return b;
}

GridSeries synth_grid_series(std::uint64_t seed, const GridSynthParams& params) {
  OracleQuantiles oracle(params, seed);
  Rng noise(derive_seed(seed, 2));
  Tensor y(Shape{params.steps, params.rows, params.cols});
  std::size_t flat = 0;
  for (std::size_t t = 0; t < params.steps; ++t) {
    for (std::size_t m = 0; m < params.rows; ++m) {
      for (std::size_t n = 0; n < params.cols; ++n) {
        y[flat++] = oracle.signal(m, n, t) + oracle.scale(m, n, t) * noise.normal();
      }
    }
  }
  SeriesDataset ds;
  ds.y = std::move(y);
  ds.metadata = {{"origin", "synthetic-grid"}, {"seed", seed}, {"params", params.to_json()}};
  return {std::move(ds), std::move(oracle)};
}

// ---------------------------------------------------------------------------- splitting

std::vector<std::size_t> split_sizes(std::size_t n, const std::vector<double>& fractions) {
  if (fractions.empty()) throw std::invalid_argument("split needs at least one fraction");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("split fractions must sum to 1, got " + std::to_string(total));
  }
  std::vector<std::size_t> sizes;
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
    const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[i]));
    if (used + s > n) throw std::invalid_argument("split fractions exceed the available items");
    sizes.push_back(s);
    used += s;
  }
  sizes.push_back(n - used);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (fractions[i] > 0.0 && sizes[i] == 0) {
      throw std::invalid_argument("split " + std::to_string(i) + " (fraction " +
                                  std::to_string(fractions[i]) + ") is empty for " +
                                  std::to_string(n) + " items");
    }
  }
  return sizes;
}

std::vector<std::vector<std::size_t>> random_split(std::size_t n, const std::vector<double>& fractions,
                                                   Rng& rng) {
  const auto sizes = split_sizes(n, fractions);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> parts;
  std::size_t pos = 0;
  for (std::size_t s : sizes) {
    std::vector<std::size_t> part(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                  order.begin() + static_cast<std::ptrdiff_t>(pos + s));
    std::sort(part.begin(), part.end());
    parts.push_back(std::move(part));
    pos += s;
  }
  return parts;
}

std::vector<StepRange> chronological_split(std::size_t steps, const std::vector<double>& fractions) {
  std::vector<StepRange> out;
  std::size_t pos = 0;
  for (std::size_t s : split_sizes(steps, fractions)) {
    out.push_back({pos, pos + s});
    pos += s;
  }
  return out;
}

// ---------------------------------------------------------------------------- windowing

SupervisedSet window(const Tensor& series, std::size_t lags, std::size_t horizon) {
  if (series.rank() != 3) throw ShapeError("window expects a T x M x N series, got " + to_string(series.shape()));
  if (lags == 0) throw std::invalid_argument("window length must be at least 1");
  if (horizon == 0) throw std::invalid_argument("forecast horizon must be at least 1");
  const std::size_t steps = series.dim(0), rows = series.dim(1), cols = series.dim(2);
  if (steps < lags + horizon) {
    throw std::invalid_argument("series has " + std::to_string(steps) + " steps; windows of " +
                                std::to_string(lags) + " lags at horizon " + std::to_string(horizon) +
                                " need at least " + std::to_string(lags + horizon));
  }
  const std::size_t count = steps - lags - horizon + 1, frame = rows * cols;
  SupervisedSet out{Tensor(Shape{count, lags, rows, cols, 1}), Tensor(Shape{count, rows, cols})};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t target = window_target_step(i, lags, horizon);
    const std::size_t first = target - horizon - lags + 1;
    std::copy_n(series.values().begin() + static_cast<std::ptrdiff_t>(first * frame), lags * frame,
                out.inputs.data().begin() + static_cast<std::ptrdiff_t>(i * lags * frame));
    std::copy_n(series.values().begin() + static_cast<std::ptrdiff_t>(target * frame), frame,
                out.targets.data().begin() + static_cast<std::ptrdiff_t>(i * frame));
  }
  return out;
}

SupervisedSet lag_features(const SupervisedSet& windows) {
  const Tensor& in = windows.inputs;
  if (in.rank() != 5 || in.dim(4) != 1) {
    throw ShapeError("lag_features expects n x L x M x N x 1 windows, got " + to_string(in.shape()));
  }
  const std::size_t count = in.dim(0), lags = in.dim(1), frame = in.dim(2) * in.dim(3);
  SupervisedSet out{Tensor(Shape{count * frame, lags}), windows.targets.reshaped(Shape{count * frame})};
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t l = 0; l < lags; ++l) {
      for (std::size_t c = 0; c < frame; ++c) {
        out.inputs[(i * frame + c) * lags + l] = in[(i * lags + l) * frame + c];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------- standardization

Standardizer::Standardizer(Tensor mean, Tensor stddev) : mean_(std::move(mean)), std_(std::move(stddev)) {
  require_same_shape(mean_, std_, "standardizer statistics");
  for (double s : std_.data()) {
    if (!(s > 0.0)) throw std::invalid_argument("standardizer std must be positive");
  }
}

Standardizer Standardizer::fit(const Tensor& reference) {
  if (reference.rank() == 0 || reference.dim(0) == 0) {
    throw std::invalid_argument("cannot standardize from an empty reference split");
  }
  const Shape cells(reference.shape().begin() + 1, reference.shape().end());
  const std::size_t n = reference.dim(0), width = element_count(cells);
  Tensor mean(cells), sd(cells);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < width; ++c) mean[c] += reference[i * width + c];
  }
  for (double& m : mean.data()) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < width; ++c) {
      const double d = reference[i * width + c] - mean[c];
      sd[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < width; ++c) {
    sd[c] = std::sqrt(sd[c] / static_cast<double>(n));
    if (!(sd[c] > 1e-12 * std::max(1.0, std::abs(mean[c])))) {
      throw std::invalid_argument("zero variance in " + cell_name(cells, c) +
                                  " of the training split; cannot standardize");
    }
  }
  return Standardizer(std::move(mean), std::move(sd));
}

Tensor Standardizer::apply(const Tensor& data) const {
  const std::size_t width = mean_.size();
  if (data.size() % width != 0 ||
      !std::equal(mean_.shape().rbegin(), mean_.shape().rend(), data.shape().rbegin())) {
    throw ShapeError("standardizer for cells " + to_string(mean_.shape()) + " cannot apply to " +
                     to_string(data.shape()));
  }
  Tensor out = data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean_[i % width]) / std_[i % width];
  return out;
}

Tensor Standardizer::invert(const Tensor& data) const {
  const std::size_t width = mean_.size();
  if (data.size() % width != 0 ||
      !std::equal(mean_.shape().rbegin(), mean_.shape().rend(), data.shape().rbegin())) {
    throw ShapeError("standardizer for cells " + to_string(mean_.shape()) + " cannot invert " +
                     to_string(data.shape()));
  }
  Tensor out = data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * std_[i % width] + mean_[i % width];
  return out;
}

ForecastBundle Standardizer::invert(const ForecastBundle& bundle) const {
  ForecastBundle out;
  out.mean = invert(bundle.mean);
  out.quantiles = bundle.quantiles;
  const std::size_t j = bundle.levels(), width = mean_.size();
  for (std::size_t i = 0; i < out.quantiles.size(); ++i) {
    const std::size_t c = (i / j) % width;
    out.quantiles[i] = out.quantiles[i] * std_[c] + mean_[c];
  }
  return out;
}

nlohmann::json Standardizer::to_json() const {
  return {{"shape", mean_.shape()}, {"mean", mean_.values()}, {"std", std_.values()}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  const Shape shape = j.at("shape").get<Shape>();
  return Standardizer(Tensor(shape, j.at("mean").get<std::vector<double>>()),
                      Tensor(shape, j.at("std").get<std::vector<double>>()));
}

// ---------------------------------------------------------------------------- prepared splits

PreparedData prepare_grid(const SeriesDataset& ds, std::size_t lags, std::size_t horizon,
                          const std::vector<double>& fractions) {
  if (!ds.is_grid()) throw std::invalid_argument("prepare_grid needs a T x M x N series");
  if (fractions.size() != 3) throw std::invalid_argument("grid split needs train, val and test fractions");
  PreparedData out;
  out.lags = lags;
  out.horizon = horizon;
  out.ranges = chronological_split(ds.steps(), fractions);
  const StepRange& tr = out.ranges[0];
  out.target_scaler = Standardizer::fit(ds.y.slice_rows(tr.begin, tr.end));
  out.input_scaler = out.target_scaler;
  SupervisedSet* parts[3] = {&out.train, &out.val, &out.test};
  for (std::size_t s = 0; s < 3; ++s) {
    const StepRange& r = out.ranges[s];
    if (r.size() == 0) continue;
    if (r.size() < lags + horizon) {
      throw std::invalid_argument("split " + std::to_string(s) + " spans " + std::to_string(r.size()) +
                                  " steps, fewer than lags + horizon = " + std::to_string(lags + horizon));
    }
    *parts[s] = window(out.target_scaler.apply(ds.y.slice_rows(r.begin, r.end)), lags, horizon);
  }
  return out;
}

PreparedData prepare_points(const SeriesDataset& ds, const std::vector<double>& fractions, Rng& rng) {
  if (ds.x.rank() != 1 || ds.y.rank() != 1) throw std::invalid_argument("prepare_points needs 1-D x and y");
  require_same_shape(ds.x, ds.y, "x vs y");
  if (fractions.size() != 2 && fractions.size() != 3) {
    throw std::invalid_argument("point split needs (train, test) or (train, val, test) fractions");
  }
  auto parts = random_split(ds.y.size(), fractions, rng);
  if (parts.size() == 2) parts.insert(parts.begin() + 1, std::vector<std::size_t>{});
  PreparedData out;
  out.input_scaler = Standardizer::fit(ds.x.gather_rows(parts[0]));
  out.target_scaler = Standardizer::fit(ds.y.gather_rows(parts[0]));
  SupervisedSet* dest[3] = {&out.train, &out.val, &out.test};
  for (std::size_t s = 0; s < 3; ++s) {
    if (parts[s].empty()) continue;
    const std::size_t n = parts[s].size();
    dest[s]->inputs = out.input_scaler.apply(ds.x.gather_rows(parts[s])).reshaped(Shape{n, 1});
    dest[s]->targets = out.target_scaler.apply(ds.y.gather_rows(parts[s]));
  }
  return out;
}

// ---------------------------------------------------------------------------- persistence

void save_dataset(const std::filesystem::path& dir, const SeriesDataset& ds) {
  std::filesystem::create_directories(dir);
  std::vector<NamedTensor> tensors{{"y", ds.y}};
  if (!ds.x.empty()) tensors.push_back({"x", ds.x});
  save_tensors(dir / "series.bin", tensors);
  nlohmann::json side = ds.metadata;
  side["shape"] = ds.y.shape();
  std::ofstream out(dir / "series.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + (dir / "series.json").string() + "'");
  out << side.dump(2) << '\n';
}

SeriesDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "series.json");
  if (!in) throw std::runtime_error("no dataset sidecar at '" + (dir / "series.json").string() + "'");
  SeriesDataset ds;
  ds.metadata = nlohmann::json::parse(in);
  const auto tensors = load_tensors(dir / "series.bin");
  ds.y = find_tensor(tensors, "y");
  for (const auto& t : tensors) {
    if (t.name == "x") ds.x = t.tensor;
  }
  if (ds.metadata.contains("shape") && ds.metadata["shape"].get<Shape>() != ds.y.shape()) {
    throw std::runtime_error("dataset sidecar shape does not match series.bin");
  }
  ds.metadata.erase("shape");
  return ds;
}

}  // namespace jmqr
