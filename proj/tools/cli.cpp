#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "jmqr/pipeline.hpp"

namespace jmqr::cli {

namespace {

namespace fs = std::filesystem;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> repeats;
  std::string levels;
  std::string intervals;
  std::string data;
  std::string preset;
};

nlohmann::json load_config_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "' is not valid JSON: " + e.what());
  } catch (const std::runtime_error&) {
    throw std::invalid_argument("cannot read config '" + path + "'");
  }
}

RunConfig resolve(const Overrides& o) {
  nlohmann::json j = load_config_json(o.config);
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  if (o.seed) j["seed"] = *o.seed;
  if (!o.out.empty()) j["out"] = o.out;
  if (o.repeats) j["repeats"] = *o.repeats;
  if (!o.levels.empty()) {
    j["levels"] = QuantileLevels::parse(o.levels).values();
    if (o.intervals.empty()) j.erase("intervals");
  }
  if (!o.intervals.empty()) j["intervals"] = nlohmann::json::array({o.intervals});
  if (!o.data.empty()) j["dataset"]["path"] = o.data;
  if (!o.preset.empty()) j["dataset"]["preset"] = o.preset;
  return RunConfig::from_json(j);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void print_summary(std::ostream& out, const AggregatedReport& agg) {
  for (std::size_t k = 0; k < agg.columns.size(); ++k) {
    out << "  " << agg.columns[k] << ": " << fmt(agg.mean[k]);
    if (agg.repeats > 1) out << " (+/- " << fmt(agg.stddev[k]) << ")";
    out << '\n';
  }
}

int cmd_generate(const Overrides& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  if (cfg.dataset.preset.empty()) {
    std::string valid;
    for (const auto& n : dataset_preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("no preset given (use --preset or dataset.preset); valid presets: " + valid);
  }
  const std::uint64_t seed = cfg.dataset.seed.value_or(cfg.seed);
  const fs::path dir = !o.out.empty() ? fs::path(o.out) : !cfg.dataset.path.empty() ? fs::path(cfg.dataset.path) : fs::path(cfg.out);
  const SeriesDataset ds = generate_dataset(cfg.dataset, seed, cfg.split, cfg.lags, cfg.horizon);
  try {
    save_dataset(dir, ds);
  } catch (const fs::filesystem_error& e) {
    throw std::runtime_error("cannot write dataset to '" + dir.string() + "': " + e.code().message());
  }
  out << "wrote " << (dir / "series.bin").string() << " and " << (dir / "series.json").string() << " (shape "
      << to_string(ds.y.shape()) << ", seed " << seed << ")\n";
  return kSuccess;
}

int cmd_train(const Overrides& o, std::ostream& out) {
  const RunConfig cfg = resolve(o);
  const AggregatedReport agg = execute_train(cfg);
  out << "trained " << cfg.model.type << " model, " << cfg.repeats << " run(s) in " << cfg.out << '\n';
  print_summary(out, agg);
  return kSuccess;
}

int cmd_evaluate(const std::string& run_dir, const std::string& intervals, std::ostream& out) {
  std::optional<std::vector<IntervalPair>> pairs;
  if (!intervals.empty()) pairs = IntervalPair::parse_list(intervals);
  const AggregatedReport agg = execute_evaluate(run_dir, pairs);
  out << "wrote " << (fs::path(run_dir) / "report.json").string() << '\n';
  print_summary(out, agg);
  return kSuccess;
}

bool parse_number(const std::string& field, double& value) {
  try {
    std::size_t used = 0;
    value = std::stod(field, &used);
    return field.find_first_not_of(" \t", used) == std::string::npos;
  } catch (const std::logic_error&) {
    return false;
  }
}

/// Rows of comma-separated numbers, each with `width` values. A first line without any
/// numeric field is a header.
std::vector<std::vector<double>> read_rows(const std::string& path, std::size_t width) {
  const std::string text = read_text(path);
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) {
      std::vector<std::string> fields;
      std::vector<std::size_t> starts;
      for (std::size_t start = 0;;) {
        const std::size_t comma = line.find(',', start);
        starts.push_back(start);
        fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      std::vector<double> values(fields.size());
      std::vector<bool> ok(fields.size());
      bool any = false;
      for (std::size_t f = 0; f < fields.size(); ++f) {
        ok[f] = parse_number(fields[f], values[f]);
        any = any || ok[f];
      }
      if (line_no == 1 && !any) {
        pos = end + 1;
        continue;
      }
      for (std::size_t f = 0; f < fields.size(); ++f) {
        if (!ok[f]) {
          throw ParseError(path + ": line " + std::to_string(line_no) + ", column " + std::to_string(f + 1) +
                               " (byte offset " + std::to_string(pos + starts[f]) + "): '" + fields[f] +
                               "' is not a number",
                           line_no);
        }
      }
      if (values.size() != width) {
        throw ParseError(path + ": line " + std::to_string(line_no) + " (byte offset " + std::to_string(pos) +
                             ") has " + std::to_string(values.size()) + " values, the model expects " +
                             std::to_string(width) + " per sample",
                         line_no);
      }
      rows.push_back(std::move(values));
    }
    pos = end + 1;
  }
  if (rows.empty()) throw ParseError(path + ": no input rows", 0);
  return rows;
}

int cmd_predict(const std::string& run_dir, const std::string& input, const std::string& out_path,
                const std::string& plot_path, std::ostream& out) {
  fs::path dir(run_dir);
  if (!fs::exists(dir / "descriptor.json")) {
    throw std::invalid_argument("'" + run_dir + "' holds no trained model (pick a repeat_XX directory for repeated runs)");
  }
  const LoadedRun run = load_run(dir);
  const Shape cells = run.target_scaler.mean().shape();
  const std::size_t frame = element_count(cells);
  const std::size_t width = run.grid ? run.config.lags * frame : 1;
  const auto rows = read_rows(input, width);
  const std::size_t n = rows.size();

  Tensor inputs;
  if (run.grid) {
    Shape raw{n, run.config.lags};
    raw.insert(raw.end(), cells.begin(), cells.end());
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    Shape model_shape = raw;
    model_shape.push_back(1);
    inputs = run.input_scaler.apply(Tensor(raw, std::move(flat))).reshaped(model_shape);
  } else {
    std::vector<double> xs;
    for (const auto& r : rows) xs.push_back(r[0]);
    inputs = run.input_scaler.apply(Tensor::vector(xs)).reshaped(Shape{n, 1});
  }
  const ForecastBundle bundle = run.target_scaler.invert(run.model.predict(inputs));
  const std::size_t j = bundle.levels();

  std::ostringstream csv;
  csv << "sample,cell,mean";
  for (double tau : run.model.levels) csv << ",q" << fmt(tau);
  csv << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < frame; ++c) {
      const std::size_t flat = i * frame + c;
      csv << i << ',' << c << ',' << fmt(bundle.mean[flat]);
      for (std::size_t k = 0; k < j; ++k) csv << ',' << fmt(bundle.quantiles[flat * j + k]);
      csv << '\n';
    }
  }
  if (out_path.empty()) {
    out << csv.str();
  } else {
    write_text(out_path, csv.str());
    out << "wrote " << out_path << '\n';
  }

  if (!plot_path.empty()) {
    std::ostringstream plot;
    plot << (run.grid ? "sample,row,col" : "x") << ",mean";
    for (double tau : run.model.levels) plot << ",q" << fmt(tau);
    plot << '\n';
    const std::size_t cols = cells.size() == 2 ? cells[1] : 1;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < frame; ++c) {
        const std::size_t flat = i * frame + c;
        if (run.grid) {
          plot << i << ',' << c / cols << ',' << c % cols;
        } else {
          plot << fmt(rows[i][0]);
        }
        plot << ',' << fmt(bundle.mean[flat]);
        for (std::size_t k = 0; k < j; ++k) plot << ',' << fmt(bundle.quantiles[flat * j + k]);
        plot << '\n';
      }
    }
    write_text(plot_path, plot.str());
    out << "wrote " << plot_path << '\n';
  }
  return kSuccess;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out_path, std::ostream& out) {
  std::vector<std::pair<std::string, AggregatedReport>> rows;
  for (const auto& d : dirs) {
    const fs::path file = fs::path(d) / "report.json";
    if (!fs::exists(file)) throw std::invalid_argument("no report.json in '" + d + "'; run evaluate first");
    const auto j = nlohmann::json::parse(read_text(file));
    const std::string name = fs::path(d).filename().string() + " (" + j.value("model", "?") + ")";
    rows.emplace_back(name, aggregated_from_json(j));
    if (j.contains("oracle")) rows.emplace_back(fs::path(d).filename().string() + " (oracle)", aggregated_from_json(j["oracle"]));
  }
  const std::string csv = report_csv(rows);
  if (out_path.empty()) {
    out << csv;
  } else {
    write_text(out_path, csv);
    out << "wrote " << out_path << '\n';
  }
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint mean and quantile regression with deep networks"};
  app.require_subcommand(1);

  Overrides gen, tr;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset (tensor file + JSON sidecar)");
  generate->add_option("--config", gen.config, "JSON config file");
  generate->add_option("--seed", gen.seed, "Dataset seed");
  generate->add_option("--out", gen.out, "Output directory");
  generate->add_option("--preset", gen.preset, "taxi, copenhagen, tiny or motorcycle-surrogate");

  auto* train = app.add_subcommand("train", "Train a model and write its run directory");
  train->add_option("--config", tr.config, "JSON config file");
  train->add_option("--seed", tr.seed, "Run seed");
  train->add_option("--out", tr.out, "Run directory");
  train->add_option("--repeats", tr.repeats, "Number of seeded repeats");
  train->add_option("--levels", tr.levels, "Quantile levels, e.g. 0.05,0.2,0.8,0.95");
  train->add_option("--intervals", tr.intervals, "Interval pairs, e.g. 0.05:0.95,0.2:0.8");
  train->add_option("--data", tr.data, "Dataset directory or CSV file");

  std::string eval_dir, eval_intervals;
  auto* evaluate = app.add_subcommand("evaluate", "Score a run directory on its test split");
  evaluate->add_option("run", eval_dir, "Run directory")->required();
  evaluate->add_option("--intervals", eval_intervals, "Interval pairs, e.g. 0.05:0.95");

  std::string pred_dir, pred_input, pred_out, pred_plot;
  auto* predict = app.add_subcommand("predict", "Forecast mean and quantiles for input windows");
  predict->add_option("run", pred_dir, "Run directory")->required();
  predict->add_option("--input", pred_input, "CSV, one flattened input window per row")->required();
  predict->add_option("--out", pred_out, "Output CSV (default: stdout)");
  predict->add_option("--plot-data", pred_plot, "Also write a tidy CSV for plotting");

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Assemble report tables from run directories");
  report->add_option("runs", report_dirs, "Run directories")->required();
  report->add_option("--out", report_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (*generate) return cmd_generate(gen, out);
    if (*train) return cmd_train(tr, out);
    if (*evaluate) return cmd_evaluate(eval_dir, eval_intervals, out);
    if (*predict) return cmd_predict(pred_dir, pred_input, pred_out, pred_plot, out);
    if (*report) return cmd_report(report_dirs, report_out, out);
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace jmqr::cli
