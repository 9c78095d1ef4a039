#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "jmqr/forecast.hpp"
#include "jmqr/model.hpp"
#include "jmqr/rng.hpp"
#include "jmqr/tensor.hpp"

namespace jmqr {

/// Malformed input file; `line` is 1-based (0 when the problem is not tied to a line).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Raw data before windowing.
///
/// 1-D problems: x and y both have shape N.
/// Grid series: x is empty and y has shape T x M x N (inputs are lagged values of y).
struct SeriesDataset {
  Tensor x;
  Tensor y;
  nlohmann::json metadata = nlohmann::json::object();

  bool is_grid() const { return y.rank() == 3; }
  std::size_t steps() const { return y.rank() == 0 ? 0 : y.dim(0); }
};

// ---------------------------------------------------------------------------- motorcycle

inline constexpr std::size_t kMotorcycleRecords = 133;

/// Two numeric columns (time in ms, acceleration in g). A non-numeric first row is treated as
/// a header. A record count other than 133 is reported on stderr and in `warnings`.
SeriesDataset load_motorcycle(const std::filesystem::path& path,
                              std::vector<std::string>* warnings = nullptr);
SeriesDataset parse_motorcycle(const std::string& text, std::vector<std::string>* warnings = nullptr);

/// Synthetic stand-in with the crash-pulse shape: flat start, deep negative pulse, rebound, and
/// noise whose scale peaks during the pulse.
SeriesDataset motorcycle_surrogate(std::uint64_t seed, std::size_t count = kMotorcycleRecords);

// ---------------------------------------------------------------------------- synthetic grid

struct GridSynthParams {
  std::size_t rows = 8;
  std::size_t cols = 8;
  std::size_t steps = 2000;
  double period = 48.0;        // steps per day
  double amplitude = 3.0;      // mean seasonal amplitude
  double noise_ratio = 0.35;   // night-time noise scale relative to the local amplitude; 0 = noiseless
  double day_factor = 0.3;     // noise multiplier at the quietest point of the day

  nlohmann::json to_json() const;
  static GridSynthParams from_json(const nlohmann::json& j);
  void validate() const;
};

/// Names accepted by grid_preset.
std::vector<std::string> grid_preset_names();
/// "taxi" (8x8x2000), "copenhagen" (9x1x5000) or "tiny" (4x4x400).
GridSynthParams grid_preset(const std::string& name);

/// True conditional distribution of a synthetic grid series: y = s + g * eps, eps ~ N(0, 1).
class OracleQuantiles {
 public:
  OracleQuantiles(const GridSynthParams& params, std::uint64_t seed);

  double signal(std::size_t m, std::size_t n, std::size_t t) const;
  double scale(std::size_t m, std::size_t n, std::size_t t) const;
  double quantile(std::size_t m, std::size_t n, std::size_t t, double tau) const;

  /// Oracle bundle for target steps [t0, t0 + count): mean = s, quantiles = s + g z_tau.
  ForecastBundle bundle(std::size_t t0, std::size_t count, const QuantileLevels& levels) const;

  const GridSynthParams& params() const { return params_; }

 private:
  GridSynthParams params_;
  std::vector<double> base_, amp_, phase_;
};

struct GridSeries {
  SeriesDataset data;
  OracleQuantiles oracle;
};

/// Same seed, same params -> bitwise identical series.
GridSeries synth_grid_series(std::uint64_t seed, const GridSynthParams& params);

// ---------------------------------------------------------------------------- splitting

/// Sizes for n items. Earlier splits get round(n * fraction), the last gets the remainder.
/// Fractions must be non-negative and sum to 1; a positive fraction that yields an empty split
/// is an error.
std::vector<std::size_t> split_sizes(std::size_t n, const std::vector<double>& fractions);

/// Random partition of 0..n-1 (each part sorted ascending).
std::vector<std::vector<std::size_t>> random_split(std::size_t n, const std::vector<double>& fractions,
                                                   Rng& rng);

/// [begin, end) step ranges of a chronological split.
struct StepRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};
std::vector<StepRange> chronological_split(std::size_t steps, const std::vector<double>& fractions);

// ---------------------------------------------------------------------------- windowing

/// Sliding windows over a T x M x N series: sample i targets step t = L + k - 1 + i and sees
/// steps t - k - L + 1 ... t - k. Inputs are n x L x M x N x 1, targets n x M x N.
/// Needs T >= L + k; yields T - L - k + 1 samples.
SupervisedSet window(const Tensor& series, std::size_t lags, std::size_t horizon);

/// Step index of sample i's target inside the windowed series.
inline std::size_t window_target_step(std::size_t i, std::size_t lags, std::size_t horizon) {
  return lags + horizon - 1 + i;
}

/// Per-cell lag features for linear models: (n*M*N) x L inputs and n*M*N targets.
SupervisedSet lag_features(const SupervisedSet& windows);

// ---------------------------------------------------------------------------- standardization

/// Per-cell affine standardization with statistics taken from a reference (training) tensor.
/// For data shaped N x [cells...] the statistics have shape [cells...].
class Standardizer {
 public:
  Standardizer() = default;
  /// Population mean and std over axis 0. Zero spread in any cell is an error naming the cell.
  static Standardizer fit(const Tensor& reference);
  Standardizer(Tensor mean, Tensor stddev);

  /// Applies to N x [cells...].
  Tensor apply(const Tensor& data) const;
  Tensor invert(const Tensor& data) const;
  /// De-standardizes mean and quantiles (N x [cells...] and N x [cells...] x J).
  ForecastBundle invert(const ForecastBundle& bundle) const;

  const Tensor& mean() const { return mean_; }
  const Tensor& stddev() const { return std_; }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);

 private:
  Tensor mean_;
  Tensor std_;
};

// ---------------------------------------------------------------------------- prepared splits

/// Train/val/test supervised sets, all on the standardized scale.
struct PreparedData {
  SupervisedSet train;
  SupervisedSet val;
  SupervisedSet test;
  Standardizer input_scaler;
  Standardizer target_scaler;
  std::vector<StepRange> ranges;  // chronological step ranges (grid data only)
  std::size_t lags = 0;
  std::size_t horizon = 0;
};

/// Grid series: chronological split of the steps, per-cell standardization from the train
/// range, then windowing inside each range so no sample straddles a boundary.
/// A split with a zero fraction is left empty.
PreparedData prepare_grid(const SeriesDataset& ds, std::size_t lags, std::size_t horizon,
                          const std::vector<double>& fractions);

/// 1-D data: random split drawn from rng; x and y standardized separately from the train part.
PreparedData prepare_points(const SeriesDataset& ds, const std::vector<double>& fractions, Rng& rng);

// ---------------------------------------------------------------------------- persistence

/// Writes <dir>/series.bin (tensor container with "y" and, for 1-D data, "x") and
/// <dir>/series.json (shape, metadata).
void save_dataset(const std::filesystem::path& dir, const SeriesDataset& ds);
SeriesDataset load_dataset(const std::filesystem::path& dir);

}  // namespace jmqr
