#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jmqr/data.hpp"
#include "jmqr/eval.hpp"
#include "jmqr/models.hpp"

namespace jmqr {

/// Where the data comes from. `preset` is used by generation; `path` (a generated dataset
/// directory or a two-column CSV) by training.
struct DatasetSpec {
  std::string preset;
  nlohmann::json params = nlohmann::json::object();  // overrides on top of the preset
  std::string path;
  std::optional<std::uint64_t> seed;  // dataset seed; defaults to the run seed
};

struct ModelSpec {
  /// joint | independent | linear | mc_dropout
  std::string type = "joint";
  /// Network family; empty picks mlp for 1-D data and convlstm for grids.
  std::string family;
  std::vector<HiddenSpec> hidden{{50, Activation::tanh}, {10, Activation::linear}};
  std::vector<std::size_t> filters{8};
  std::size_t kernel = 3;
  OGateSource ogate = OGateSource::cell;
  /// Dropout keep probability; unset uses the family default (1 for mlp, 0.8 for convlstm).
  std::optional<double> keep;
  std::size_t mc_samples = 100;
  /// zhu | gal
  std::string calibration = "zhu";
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  QuantileLevels levels{0.05, 0.2, 0.8, 0.95};
  /// Defaults to the symmetric (tau, 1 - tau) pairs among the levels.
  std::vector<IntervalPair> intervals{{0.05, 0.95}, {0.2, 0.8}};
  /// (train, test) or (train, val, test); empty picks (2/3, 1/3) for 1-D data, (0.6, 0.2, 0.2) for grids.
  std::vector<double> split;
  std::size_t lags = 10;
  std::size_t horizon = 1;
  std::size_t repeats = 1;
  /// Seed of the random train/test split of 1-D data. Unset: each repeat draws its split from
  /// its own run seed; set: every repeat shares one split and only initialization varies.
  std::optional<std::uint64_t> split_seed;

  /// Unknown keys anywhere are errors.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Seed of repeat r.
inline std::uint64_t repeat_seed(std::uint64_t seed, std::size_t r) { return seed + r; }

// ---------------------------------------------------------------------------- data

/// Builds (or loads) the dataset described by a spec. Presets: the grid presets plus
/// "motorcycle-surrogate".
SeriesDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed, std::vector<double> split,
                               std::size_t lags, std::size_t horizon);
std::vector<std::string> dataset_preset_names();

/// Loads `spec.path`: a directory written by save_dataset or a CSV file.
SeriesDataset load_series(const DatasetSpec& spec);

/// Split and standardize for one run.
PreparedData prepare_run_data(const RunConfig& cfg, const SeriesDataset& ds, std::uint64_t run_seed);

// ---------------------------------------------------------------------------- models

/// A trained predictor of any type, on the standardized scale.
class TrainedModel {
 public:
  std::string type;
  QuantileLevels levels;
  std::vector<std::unique_ptr<Model>> members;  // joint/mc_dropout: one; independent/linear: 1 + J
  double sigma2 = 0.0;
  std::size_t mc_samples = 0;
  std::uint64_t mc_seed = 0;

  /// Standardized-scale forecast for windowed (grid) or N x 1 (1-D) inputs.
  ForecastBundle predict(const Tensor& inputs) const;

  nlohmann::json descriptor() const;
  std::vector<NamedTensor> weights() const;
  static TrainedModel load(const nlohmann::json& descriptor, const std::vector<NamedTensor>& weights);
};

struct MemberHistory {
  std::string label;
  TrainResult result;
};

struct TrainOutcome {
  TrainedModel model;
  std::vector<MemberHistory> histories;
};

TrainOutcome train_run(const RunConfig& cfg, const PreparedData& data, std::uint64_t run_seed);

/// history.csv contents: one member gives epoch,train_loss,val_loss; several add a leading
/// member column.
std::string histories_csv(const std::vector<MemberHistory>& histories);

// ---------------------------------------------------------------------------- evaluation

struct RunEvaluation {
  MetricsReport report;
  std::optional<MetricsReport> oracle;  // synthetic grids only
  std::string scale;                    // "standardized" or "original"
};

/// Test-split metrics. Grid runs are scored on the original scale, 1-D runs on the
/// standardized scale.
RunEvaluation evaluate_run(const TrainedModel& model, const PreparedData& data, const SeriesDataset& ds,
                           const std::vector<IntervalPair>& intervals);

// ---------------------------------------------------------------------------- run directories

/// Trains every repeat, writes the run directory (or repeat_XX subdirectories plus an aggregate
/// report) and returns the aggregate.
AggregatedReport execute_train(const RunConfig& cfg);

/// Re-evaluates an existing run directory, rewriting report.json and report.csv.
AggregatedReport execute_evaluate(const std::filesystem::path& run_dir,
                                  const std::optional<std::vector<IntervalPair>>& intervals);

struct LoadedRun {
  RunConfig config;
  TrainedModel model;
  Standardizer input_scaler;
  Standardizer target_scaler;
  bool grid = false;
};

LoadedRun load_run(const std::filesystem::path& run_dir);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace jmqr
