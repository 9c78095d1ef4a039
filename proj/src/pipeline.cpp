#include "jmqr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "jmqr/tensor_io.hpp"

namespace jmqr {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw std::invalid_argument("unknown key '" + key + "' in " + where + " (allowed: " + list + ")");
    }
  }
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("config value " + where + " has the wrong type: " + j.dump());
  }
}

std::vector<IntervalPair> parse_intervals_json(const nlohmann::json& j) {
  std::vector<IntervalPair> out;
  if (!j.is_array()) throw std::invalid_argument("config intervals must be a list");
  for (const auto& item : j) {
    if (item.is_string()) {
      for (const auto& p : IntervalPair::parse_list(item.get<std::string>())) out.push_back(p);
    } else if (item.is_array() && item.size() == 2) {
      IntervalPair p{get_as<double>(item[0], "intervals"), get_as<double>(item[1], "intervals")};
      if (!(p.lower > 0.0 && p.lower < p.upper && p.upper < 1.0)) {
        throw std::invalid_argument("config interval " + item.dump() + " needs 0 < lower < upper < 1");
      }
      out.push_back(p);
    } else {
      throw std::invalid_argument("config interval " + item.dump() + " must be [lower, upper]");
    }
  }
  return out;
}

/// (tau, 1 - tau) pairs available among the levels, widest first.
std::vector<IntervalPair> symmetric_intervals(const QuantileLevels& levels) {
  std::vector<IntervalPair> out;
  for (double tau : levels) {
    if (tau >= 0.5) break;
    for (double other : levels) {
      if (std::abs(other - (1.0 - tau)) < 1e-9) out.push_back({tau, other});
    }
  }
  return out;
}

std::string format_repeat(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "repeat_%02zu", r);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------- config

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"seed", "out", "dataset", "model", "train", "levels", "intervals", "split", "lags",
                 "horizon", "repeats", "split_seed"},
             "config");
  RunConfig c;
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j["seed"], "seed");
  if (j.contains("out")) c.out = get_as<std::string>(j["out"], "out");
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d, {"preset", "params", "path", "seed"}, "dataset");
    if (d.contains("preset")) c.dataset.preset = get_as<std::string>(d["preset"], "dataset.preset");
    if (d.contains("params")) {
      if (!d["params"].is_object()) throw std::invalid_argument("dataset.params must be an object");
      c.dataset.params = d["params"];
    }
    if (d.contains("path")) c.dataset.path = get_as<std::string>(d["path"], "dataset.path");
    if (d.contains("seed") && !d["seed"].is_null()) c.dataset.seed = get_as<std::uint64_t>(d["seed"], "dataset.seed");
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"type", "family", "hidden", "filters", "kernel", "ogate", "keep", "mc_samples", "calibration"},
               "model");
    if (m.contains("type")) c.model.type = get_as<std::string>(m["type"], "model.type");
    if (m.contains("family")) c.model.family = get_as<std::string>(m["family"], "model.family");
    if (m.contains("hidden")) {
      c.model.hidden.clear();
      for (const auto& h : m["hidden"]) {
        check_keys(h, {"units", "activation"}, "model.hidden entry");
        c.model.hidden.push_back({get_as<std::size_t>(h.at("units"), "model.hidden.units"),
                                  parse_activation(get_as<std::string>(h.at("activation"), "model.hidden.activation"))});
      }
    }
    if (m.contains("filters")) c.model.filters = get_as<std::vector<std::size_t>>(m["filters"], "model.filters");
    if (m.contains("kernel")) c.model.kernel = get_as<std::size_t>(m["kernel"], "model.kernel");
    if (m.contains("ogate")) c.model.ogate = parse_ogate_source(get_as<std::string>(m["ogate"], "model.ogate"));
    if (m.contains("keep") && !m["keep"].is_null()) c.model.keep = get_as<double>(m["keep"], "model.keep");
    if (m.contains("mc_samples")) c.model.mc_samples = get_as<std::size_t>(m["mc_samples"], "model.mc_samples");
    if (m.contains("calibration")) c.model.calibration = get_as<std::string>(m["calibration"], "model.calibration");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, {"epochs", "batch_size", "learning_rate", "patience", "quantile_weight", "restore_best"}, "train");
    if (t.contains("epochs")) c.train.epochs = get_as<std::size_t>(t["epochs"], "train.epochs");
    if (t.contains("batch_size")) c.train.batch_size = get_as<std::size_t>(t["batch_size"], "train.batch_size");
    if (t.contains("learning_rate")) c.train.learning_rate = get_as<double>(t["learning_rate"], "train.learning_rate");
    if (t.contains("patience")) c.train.patience = get_as<std::size_t>(t["patience"], "train.patience");
    if (t.contains("quantile_weight")) c.train.quantile_weight = get_as<double>(t["quantile_weight"], "train.quantile_weight");
    if (t.contains("restore_best")) c.train.restore_best = get_as<bool>(t["restore_best"], "train.restore_best");
  }
  if (j.contains("levels")) c.levels = QuantileLevels(get_as<std::vector<double>>(j["levels"], "levels"));
  if (j.contains("intervals")) c.intervals = parse_intervals_json(j["intervals"]);
  else c.intervals = symmetric_intervals(c.levels);
  if (j.contains("split")) c.split = get_as<std::vector<double>>(j["split"], "split");
  if (j.contains("lags")) c.lags = get_as<std::size_t>(j["lags"], "lags");
  if (j.contains("horizon")) c.horizon = get_as<std::size_t>(j["horizon"], "horizon");
  if (j.contains("repeats")) c.repeats = get_as<std::size_t>(j["repeats"], "repeats");
  if (j.contains("split_seed") && !j["split_seed"].is_null()) c.split_seed = get_as<std::uint64_t>(j["split_seed"], "split_seed");

  static const std::set<std::string> types{"joint", "independent", "linear", "mc_dropout"};
  if (!types.count(c.model.type)) {
    throw std::invalid_argument("unknown model.type '" + c.model.type +
                                "' (expected joint, independent, linear or mc_dropout)");
  }
  if (!c.model.family.empty() && c.model.family != "mlp" && c.model.family != "convlstm") {
    throw std::invalid_argument("unknown model.family '" + c.model.family + "' (expected mlp or convlstm)");
  }
  if (c.model.calibration != "zhu" && c.model.calibration != "gal") {
    throw std::invalid_argument("unknown model.calibration '" + c.model.calibration + "' (expected zhu or gal)");
  }
  if (c.repeats == 0) throw std::invalid_argument("repeats must be at least 1");
  if (c.train.epochs == 0) throw std::invalid_argument("train.epochs must be at least 1");
  if (c.train.batch_size == 0) throw std::invalid_argument("train.batch_size must be at least 1");
  if (!(c.train.learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
  return c;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json hidden = nlohmann::json::array();
  for (const auto& h : model.hidden) hidden.push_back({{"units", h.units}, {"activation", jmqr::to_string(h.act)}});
  nlohmann::json intervals_json = nlohmann::json::array();
  for (const auto& p : intervals) intervals_json.push_back({p.lower, p.upper});
  nlohmann::json ds = {{"preset", dataset.preset}, {"params", dataset.params}, {"path", dataset.path}};
  ds["seed"] = dataset.seed ? nlohmann::json(*dataset.seed) : nlohmann::json(nullptr);
  return {{"seed", seed},
          {"out", out},
          {"dataset", ds},
          {"model",
           {{"type", model.type},
            {"family", model.family},
            {"hidden", hidden},
            {"filters", model.filters},
            {"kernel", model.kernel},
            {"ogate", jmqr::to_string(model.ogate)},
            {"keep", model.keep ? nlohmann::json(*model.keep) : nlohmann::json(nullptr)},
            {"mc_samples", model.mc_samples},
            {"calibration", model.calibration}}},
          {"train",
           {{"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"learning_rate", train.learning_rate},
            {"patience", train.patience},
            {"quantile_weight", train.quantile_weight},
            {"restore_best", train.restore_best}}},
          {"levels", levels.values()},
          {"intervals", intervals_json},
          {"split", split},
          {"lags", lags},
          {"horizon", horizon},
          {"repeats", repeats},
          {"split_seed", split_seed ? nlohmann::json(*split_seed) : nlohmann::json(nullptr)}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------- data

std::vector<std::string> dataset_preset_names() {
  auto names = grid_preset_names();
  names.push_back("motorcycle-surrogate");
  return names;
}

SeriesDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed, std::vector<double> split,
                               std::size_t lags, std::size_t horizon) {
  const auto names = dataset_preset_names();
  if (std::find(names.begin(), names.end(), spec.preset) == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown preset '" + spec.preset + "'; valid presets: " + valid);
  }
  if (spec.preset == "motorcycle-surrogate") {
    check_keys(spec.params, {"count"}, "dataset.params");
    const std::size_t count = spec.params.value("count", kMotorcycleRecords);
    return motorcycle_surrogate(seed, count);
  }
  nlohmann::json merged = grid_preset(spec.preset).to_json();
  for (const auto& [key, value] : spec.params.items()) merged[key] = value;
  const GridSynthParams params = GridSynthParams::from_json(merged);
  SeriesDataset ds = synth_grid_series(seed, params).data;
  ds.metadata["preset"] = spec.preset;
  if (split.empty()) split = {0.6, 0.2, 0.2};
  nlohmann::json ranges = nlohmann::json::array();
  for (const StepRange& r : chronological_split(params.steps, split)) ranges.push_back({r.begin, r.end});
  ds.metadata["split"] = {{"fractions", split}, {"ranges", ranges}, {"lags", lags}, {"horizon", horizon}};
  return ds;
}

SeriesDataset load_series(const DatasetSpec& spec) {
  if (spec.path.empty()) throw std::invalid_argument("dataset.path is required (a generated dataset directory or a CSV file)");
  const std::filesystem::path p(spec.path);
  if (std::filesystem::is_directory(p)) return load_dataset(p);
  if (!std::filesystem::exists(p)) throw std::invalid_argument("dataset path '" + spec.path + "' does not exist");
  return load_motorcycle(p);
}

PreparedData prepare_run_data(const RunConfig& cfg, const SeriesDataset& ds, std::uint64_t run_seed) {
  if (ds.is_grid()) {
    return prepare_grid(ds, cfg.lags, cfg.horizon, cfg.split.empty() ? std::vector<double>{0.6, 0.2, 0.2} : cfg.split);
  }
  Rng rng(derive_seed(cfg.split_seed.value_or(run_seed), 1));
  return prepare_points(ds, cfg.split.empty() ? std::vector<double>{2.0 / 3.0, 1.0 / 3.0} : cfg.split, rng);
}

// ---------------------------------------------------------------------------- models

ForecastBundle TrainedModel::predict(const Tensor& inputs) const {
  if (members.empty()) throw std::logic_error("trained model has no members");
  if (type == "joint") return split_heads(members.front()->predict(inputs));
  if (type == "mc_dropout") {
    MCDropoutPredictor p{std::shared_ptr<const Model>(std::shared_ptr<const Model>{}, members.front().get()),
                         mc_samples, sigma2};
    Rng rng(mc_seed);
    const MCMoments m = mc_predict(p, inputs, rng);
    return gaussian_quantiles(m.mean, m.variance, levels);
  }
  std::vector<Tensor> outputs;
  if (type == "linear" && inputs.rank() == 5) {
    const std::size_t n = inputs.dim(0), rows = inputs.dim(2), cols = inputs.dim(3);
    const SupervisedSet feats = lag_features({inputs, Tensor(Shape{n, rows, cols})});
    for (const auto& m : members) outputs.push_back(m->predict(feats.inputs).reshaped(Shape{n, rows, cols, 1}));
  } else {
    for (const auto& m : members) outputs.push_back(m->predict(inputs));
  }
  return stack_member_outputs(outputs);
}

nlohmann::json TrainedModel::descriptor() const {
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t k = 0; k < members.size(); ++k) {
    std::string task = "joint";
    if (type == "independent" || type == "linear") {
      task = k == 0 ? Task::mean().label() : Task::quantile(levels[k - 1]).label();
    } else if (type == "mc_dropout") {
      task = Task::mean().label();
    }
    list.push_back({{"prefix", "member" + std::to_string(k) + "."}, {"task", task}, {"model", members[k]->describe()}});
  }
  return {{"type", type},
          {"levels", levels.values()},
          {"members", list},
          {"sigma2", sigma2},
          {"mc_samples", mc_samples},
          {"mc_seed", mc_seed}};
}

std::vector<NamedTensor> TrainedModel::weights() const {
  std::vector<NamedTensor> out;
  for (std::size_t k = 0; k < members.size(); ++k) {
    append_parameters(*members[k], "member" + std::to_string(k) + ".", out);
  }
  return out;
}

TrainedModel TrainedModel::load(const nlohmann::json& d, const std::vector<NamedTensor>& weights) {
  TrainedModel t;
  t.type = d.at("type").get<std::string>();
  t.levels = QuantileLevels(d.at("levels").get<std::vector<double>>());
  t.sigma2 = d.at("sigma2").get<double>();
  t.mc_samples = d.at("mc_samples").get<std::size_t>();
  t.mc_seed = d.at("mc_seed").get<std::uint64_t>();
  for (const auto& m : d.at("members")) {
    auto model = model_from_descriptor(m.at("model"));
    load_parameters(*model, weights, m.at("prefix").get<std::string>());
    t.members.push_back(std::move(model));
  }
  return t;
}

TrainOutcome train_run(const RunConfig& cfg, const PreparedData& data, std::uint64_t run_seed) {
  const bool grid = data.train.inputs.rank() == 5;
  const std::string family = cfg.model.family.empty() ? (grid ? "convlstm" : "mlp") : cfg.model.family;
  if (family == "convlstm" && !grid) throw std::invalid_argument("model.family convlstm needs grid data");
  if (family == "mlp" && grid) throw std::invalid_argument("model.family mlp needs 1-D data");
  const SupervisedSet* val = data.val.empty() ? nullptr : &data.val;

  double keep = family == "convlstm" ? 0.8 : 1.0;
  if (cfg.model.type == "mc_dropout") keep = 0.9;
  if (cfg.model.keep) keep = *cfg.model.keep;

  auto make_network = [&](std::size_t outputs, std::uint64_t seed) -> std::unique_ptr<Model> {
    Rng init(seed);
    if (family == "convlstm") {
      ConvLSTMConfig c;
      c.in_channels = data.train.inputs.dim(4);
      c.filters = cfg.model.filters;
      c.kernel = cfg.model.kernel;
      c.ogate = cfg.model.ogate;
      c.keep = keep;
      return std::make_unique<DeepJMQRNet>(c, outputs, init);
    }
    MLPConfig c;
    c.inputs = data.train.inputs.dim(1);
    c.hidden = cfg.model.hidden;
    c.keep = keep;
    return std::make_unique<JointMLP>(c, outputs, init);
  };

  TrainConfig tc = cfg.train;
  tc.seed = run_seed;
  TrainOutcome out;
  out.model.type = cfg.model.type;
  out.model.levels = cfg.levels;
  const std::size_t j = cfg.levels.size();

  if (cfg.model.type == "joint") {
    auto net = make_network(1 + j, run_seed);
    out.histories.push_back({"joint", fit_joint(*net, data.train, val, cfg.levels, tc)});
    out.model.members.push_back(std::move(net));
  } else if (cfg.model.type == "independent") {
    auto members = fit_independent([&](std::size_t k) { return make_network(1, member_seed(run_seed, k)); },
                                   data.train, val, cfg.levels, tc);
    for (auto& m : members) {
      out.histories.push_back({m.task.label(), std::move(m.result)});
      out.model.members.push_back(std::move(m.model));
    }
  } else if (cfg.model.type == "linear") {
    const SupervisedSet feats = grid ? lag_features(data.train) : data.train;
    const auto tasks = joint_tasks(cfg.levels);
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      TrainConfig mc = tc;
      mc.seed = member_seed(run_seed, k);
      TrainResult result;
      LinearModel lm = fit_linear_qr(feats, tasks[k], mc, nullptr, &result);
      out.histories.push_back({tasks[k].label(), std::move(result)});
      out.model.members.push_back(std::make_unique<LinearModel>(std::move(lm)));
    }
  } else {
    if (!val) throw std::invalid_argument("mc_dropout needs a validation split to calibrate sigma^2; use a 3-way split");
    auto net = make_network(1, run_seed);
    out.histories.push_back({"mean", fit_joint(*net, data.train, val, QuantileLevels{}, tc)});
    out.model.members.push_back(std::move(net));
    out.model.mc_samples = cfg.model.mc_samples;
    out.model.mc_seed = derive_seed(run_seed, 7);
    MCDropoutPredictor p{std::shared_ptr<const Model>(std::shared_ptr<const Model>{}, out.model.members.front().get()),
                         cfg.model.mc_samples, 0.0};
    Rng rng(derive_seed(run_seed, 8));
    if (cfg.model.calibration == "zhu") {
      const MCMoments m = mc_predict(p, data.val.inputs, rng);
      out.model.sigma2 = calibrate_sigma_zhu(data.val.targets, m.mean);
    } else {
      double var = 0.0, mean = 0.0;
      const Tensor& y = data.train.targets;
      for (double v : y.data()) mean += v / static_cast<double>(y.size());
      for (double v : y.data()) var += (v - mean) * (v - mean) / static_cast<double>(y.size());
      const auto grid_values = gal_grid(var);
      out.model.sigma2 = calibrate_sigma_gal(p, data.val, grid_values, rng);
    }
  }
  return out;
}

std::string histories_csv(const std::vector<MemberHistory>& histories) {
  if (histories.size() == 1) return history_csv(histories.front().result.history);
  std::string out = "member,epoch,train_loss,val_loss\n";
  for (const auto& h : histories) {
    const std::string body = history_csv(h.result.history);
    std::stringstream in(body.substr(body.find('\n') + 1));
    std::string line;
    while (std::getline(in, line)) out += h.label + "," + line + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------- evaluation

RunEvaluation evaluate_run(const TrainedModel& model, const PreparedData& data, const SeriesDataset& ds,
                           const std::vector<IntervalPair>& intervals) {
  if (data.test.empty()) throw std::invalid_argument("the test split is empty");
  RunEvaluation out;
  ForecastBundle bundle = model.predict(data.test.inputs);
  Tensor y = data.test.targets;
  if (ds.is_grid()) {
    bundle = data.target_scaler.invert(bundle);
    y = data.target_scaler.invert(y);
    out.scale = "original";
  } else {
    out.scale = "standardized";
  }
  out.report = evaluate_bundle(bundle, y, model.levels, intervals);
  if (ds.is_grid() && ds.metadata.value("origin", "") == "synthetic-grid") {
    const OracleQuantiles oracle(GridSynthParams::from_json(ds.metadata.at("params")),
                                 ds.metadata.at("seed").get<std::uint64_t>());
    const std::size_t first = data.ranges.at(2).begin + window_target_step(0, data.lags, data.horizon);
    out.oracle = evaluate_bundle(oracle.bundle(first, data.test.size(), model.levels), y, model.levels, intervals);
  }
  return out;
}

// ---------------------------------------------------------------------------- run directories

namespace {

struct ReportSet {
  std::string model;
  std::string scale;
  std::vector<MetricsReport> runs;
  std::vector<MetricsReport> oracle;
};

AggregatedReport write_reports(const std::filesystem::path& dir, const ReportSet& set) {
  const AggregatedReport agg = aggregate_repeats(set.runs);
  nlohmann::json j = to_json(agg);
  j["model"] = set.model;
  j["scale"] = set.scale;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : set.runs) j["runs"].push_back(to_json(r));
  std::vector<std::pair<std::string, AggregatedReport>> rows{{set.model, agg}};
  if (!set.oracle.empty()) {
    const AggregatedReport o = aggregate_repeats(set.oracle);
    j["oracle"] = to_json(o);
    rows.emplace_back("oracle", o);
  }
  write_text(dir / "report.json", j.dump(2) + "\n");
  write_text(dir / "report.csv", report_csv(rows));
  return agg;
}

nlohmann::json scalers_json(const PreparedData& data) {
  return {{"input", data.input_scaler.to_json()}, {"target", data.target_scaler.to_json()}};
}

void write_run(const std::filesystem::path& dir, const RunConfig& cfg, const TrainOutcome& outcome,
               const PreparedData& data) {
  write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
  save_tensors(dir / "weights.bin", outcome.model.weights());
  write_text(dir / "descriptor.json", outcome.model.descriptor().dump(2) + "\n");
  write_text(dir / "history.csv", histories_csv(outcome.histories));
  write_text(dir / "scalers.json", scalers_json(data).dump(2) + "\n");
}

std::vector<std::filesystem::path> run_dirs(const std::filesystem::path& root, std::size_t repeats) {
  if (repeats == 1) return {root};
  std::vector<std::filesystem::path> out;
  for (std::size_t r = 0; r < repeats; ++r) out.push_back(root / format_repeat(r));
  return out;
}

}  // namespace

AggregatedReport execute_train(const RunConfig& cfg) {
  const SeriesDataset ds = load_series(cfg.dataset);
  const std::filesystem::path root(cfg.out);
  std::filesystem::create_directories(root);
  const auto dirs = run_dirs(root, cfg.repeats);
  ReportSet set{cfg.model.type, "", {}, {}};
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    RunConfig run = cfg;
    run.seed = cfg.repeats == 1 ? cfg.seed : repeat_seed(cfg.seed, r);
    run.repeats = 1;
    run.out = dirs[r].string();
    std::filesystem::create_directories(dirs[r]);
    const PreparedData data = prepare_run_data(run, ds, run.seed);
    TrainOutcome outcome;
    try {
      outcome = train_run(run, data, run.seed);
    } catch (const TrainingAborted& e) {
      write_text(dirs[r] / "config.json", run.to_json().dump(2) + "\n");
      write_text(dirs[r] / "history.csv", history_csv(e.partial().history));
      write_text(dirs[r] / "failure.json", nlohmann::json{{"error", e.what()}}.dump(2) + "\n");
      throw;
    }
    write_run(dirs[r], run, outcome, data);
    const RunEvaluation ev = evaluate_run(outcome.model, data, ds, run.intervals);
    set.scale = ev.scale;
    if (cfg.repeats > 1) {
      ReportSet single{cfg.model.type, ev.scale, {ev.report}, {}};
      if (ev.oracle) single.oracle.push_back(*ev.oracle);
      write_reports(dirs[r], single);
    }
    set.runs.push_back(ev.report);
    if (ev.oracle) set.oracle.push_back(*ev.oracle);
  }
  if (cfg.repeats > 1) write_text(root / "config.json", cfg.to_json().dump(2) + "\n");
  return write_reports(root, set);
}

LoadedRun load_run(const std::filesystem::path& run_dir) {
  LoadedRun out;
  out.config = load_run_config(run_dir / "config.json");
  const auto descriptor = nlohmann::json::parse(read_text(run_dir / "descriptor.json"));
  out.model = TrainedModel::load(descriptor, load_tensors(run_dir / "weights.bin"));
  const auto scalers = nlohmann::json::parse(read_text(run_dir / "scalers.json"));
  out.input_scaler = Standardizer::from_json(scalers.at("input"));
  out.target_scaler = Standardizer::from_json(scalers.at("target"));
  out.grid = !out.target_scaler.mean().shape().empty();
  return out;
}

AggregatedReport execute_evaluate(const std::filesystem::path& run_dir,
                                  const std::optional<std::vector<IntervalPair>>& intervals) {
  if (!std::filesystem::exists(run_dir / "config.json")) {
    throw std::invalid_argument("'" + run_dir.string() + "' is not a run directory (no config.json)");
  }
  const RunConfig cfg = load_run_config(run_dir / "config.json");
  const SeriesDataset ds = load_series(cfg.dataset);
  ReportSet set{cfg.model.type, "", {}, {}};
  for (const auto& dir : run_dirs(run_dir, cfg.repeats)) {
    LoadedRun run = load_run(dir);
    const PreparedData data = prepare_run_data(run.config, ds, run.config.seed);
    const RunEvaluation ev = evaluate_run(run.model, data, ds, intervals ? *intervals : run.config.intervals);
    set.scale = ev.scale;
    if (cfg.repeats > 1) {
      ReportSet single{cfg.model.type, ev.scale, {ev.report}, {}};
      if (ev.oracle) single.oracle.push_back(*ev.oracle);
      write_reports(dir, single);
    }
    set.runs.push_back(ev.report);
    if (ev.oracle) set.oracle.push_back(*ev.oracle);
  }
  return write_reports(run_dir, set);
}

}  // namespace jmqr
