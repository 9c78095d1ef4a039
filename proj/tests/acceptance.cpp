// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero if
// any fails. Pass criterion names as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gradcheck.hpp"
#include "jmqr/pipeline.hpp"
#include "support.hpp"

using namespace jmqr;
using testing_support::binder_grad_check;
using testing_support::random_tensor;
using testing_support::TempDir;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string motorcycle_csv() { return (std::filesystem::path(JMQR_DATA_DIR) / "mcycle.csv").string(); }

const QuantileLevels kMotoLevels{0.05, 0.2, 0.8, 0.95};

// ---------------------------------------------------------------------------- motorcycle

Outcome motorcycle() {
  const auto t0 = std::chrono::steady_clock::now();
  TempDir dir("accept_moto");
  RunConfig cfg;
  cfg.seed = 0;
  cfg.dataset.path = motorcycle_csv();
  cfg.levels = kMotoLevels;
  cfg.intervals = {};
  cfg.repeats = 30;
  cfg.train.epochs = 1200;
  cfg.train.learning_rate = 1e-3;
  cfg.train.batch_size = 32;
  cfg.train.patience = 0;

  cfg.model.type = "joint";
  cfg.out = (dir / "joint").string();
  const AggregatedReport joint = execute_train(cfg);
  cfg.model.type = "independent";
  cfg.out = (dir / "independent").string();
  const AggregatedReport indep = execute_train(cfg);
  const double secs = seconds_since(t0);

  const double mae = joint.mean_of("MAE"), tilted = joint.mean_of("Tilted Loss");
  const double jc = joint.mean_of("Num. Crosses"), ic = indep.mean_of("Num. Crosses");
  const bool ok = mae >= 0.35 && mae <= 0.50 && tilted >= 0.33 && tilted <= 0.50 && jc < ic && secs < 300;
  return {ok, format("joint MAE %.3f (+/- %.3f), tilted %.3f (+/- %.3f), crosses %.3f vs independent %.3f; "
                     "independent MAE %.3f, tilted %.3f; %d repeats, %.0f s",
                     mae, joint.std_of("MAE"), tilted, joint.std_of("Tilted Loss"), jc, ic, indep.mean_of("MAE"),
                     indep.mean_of("Tilted Loss"), int(cfg.repeats), secs)};
}

// ---------------------------------------------------------------------------- gradients

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  auto record = [&](const std::string& name, double err) {
    if (err > worst || worst_name.empty()) worst = err, worst_name = name;
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    for (Activation act : {Activation::linear, Activation::tanh, Activation::sigmoid}) {
      DenseLayer d = DenseLayer::create(3, 4, act, rng);
      d.bias = random_tensor({4}, rng);
      Tensor x = random_tensor({5, 3}, rng);
      record("dense", binder_grad_check({&d.weights, &d.bias, &x}, [&](Binder& bind) {
               return ag::sum(ag::square(d.forward(bind, bind(x))));
             }));
    }

    MultiHeadOutput head = MultiHeadOutput::create(3, 5, rng);
    head.bias = random_tensor({5}, rng);
    Tensor h = random_tensor({2, 3, 3, 3}, rng);
    record("multi-head output", binder_grad_check({&head.weights, &head.bias, &h}, [&](Binder& bind) {
             return ag::sum(ag::square(head.forward(bind, bind(h))));
           }));

    // two stacked layers with the cell-fed output gate, one with the hidden-fed variant
    for (OGateSource og : {OGateSource::cell, OGateSource::hidden}) {
      std::vector<ConvLSTMLayer> stack{ConvLSTMLayer::create(1, 2, 3, 3, rng, og)};
      if (og == OGateSource::cell) stack.push_back(ConvLSTMLayer::create(2, 2, 3, 3, rng, og));
      std::vector<Tensor*> params;
      for (ConvLSTMLayer& l : stack) {
        for (Tensor* p : {&l.b_i, &l.b_f, &l.b_c, &l.b_o}) *p = random_tensor(p->shape(), rng, -0.5, 0.5);
        for (Tensor* p : {&l.w_yi, &l.w_hi, &l.w_yf, &l.w_hf, &l.w_yc, &l.w_hc, &l.w_yo, &l.w_ho, &l.b_i, &l.b_f,
                          &l.b_c, &l.b_o})
          params.push_back(p);
      }
      Tensor seq = random_tensor({2, 3, 3, 3, 1}, rng);
      record("convlstm", binder_grad_check(params, [&](Binder& bind) {
               DropoutContext ctx;
               return ag::sum(ag::square(convlstm_unroll(bind, stack, seq, 1.0, ctx)));
             }));
    }

    Tensor y = random_tensor({4, 3, 3}, rng);
    std::vector<Tensor> mean_pred{random_tensor({4, 3, 3, 1}, rng)};
    std::vector<Task> l2_task{Task::mean()};
    record("l2 loss", grad_check([&](Tape&, std::span<const Var> p) { return task_loss(p[0], y, l2_task); },
                                 mean_pred));

    // keep residuals clear of the kink so central differences stay on one side
    std::vector<Task> pinball_tasks{Task::quantile(0.05), Task::quantile(0.5), Task::quantile(0.95)};
    std::vector<Tensor> q_pred{random_tensor({4, 3, 3, 3}, rng)};
    for (std::size_t i = 0; i < q_pred[0].size(); ++i)
      if (std::abs(q_pred[0][i] - y[i / 3]) < 1e-3) q_pred[0][i] = y[i / 3] + 0.01;
    record("pinball loss",
           grad_check([&](Tape&, std::span<const Var> p) { return task_loss(p[0], y, pinball_tasks); }, q_pred));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 60,
          format("max relative error %.2e (%s) over 20 seeds, %.1f s", worst, worst_name.c_str(), secs)};
}

// ---------------------------------------------------------------------------- pinball oracle

double pinball_sum(const std::vector<double>& ys, double tau, double c) {
  double total = 0.0;
  for (double y : ys) total += y >= c ? tau * (y - c) : (1 - tau) * (c - y);
  return total;
}

Outcome pinball_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const double step = 1e-3;
  const std::size_t n = 25;
  Rng data_rng(2024);
  std::size_t fits = 0, matched = 0;
  double worst = 0.0;
  for (int sample = 0; sample < 50; ++sample) {
    SupervisedSet data{Tensor({n, 0}), Tensor({n})};
    for (double& v : data.targets.data()) v = data_rng.normal();
    const std::vector<double> ys = data.targets.values();
    const double lo_y = *std::min_element(ys.begin(), ys.end()), hi_y = *std::max_element(ys.begin(), ys.end());
    for (double tau : {0.05, 0.2, 0.5, 0.8, 0.95}) {
      // every grid point tied for the minimum, so flat stretches count in full
      double best = INFINITY, first = 0, last = 0;
      for (long k = 0;; ++k) {
        const double c = std::floor(lo_y / step) * step - step + k * step;
        if (c > hi_y + step) break;
        const double v = pinball_sum(ys, tau, c);
        if (v < best - 1e-12) {
          best = v;
          first = last = c;
        } else if (std::abs(v - best) <= 1e-12) {
          last = c;
        }
      }

      LinearModel model(0, {});
      std::vector<Task> tasks{Task::quantile(tau)};
      TrainConfig cfg;
      cfg.batch_size = n;
      cfg.patience = 0;
      cfg.seed = static_cast<std::uint64_t>(sample);
      // stepped learning rate: fast approach, then settle onto the kink
      for (auto [epochs, lr] : {std::pair{3000, 1e-2}, {2000, 1e-3}, {2000, 1e-4}}) {
        cfg.epochs = epochs;
        cfg.learning_rate = lr;
        train(model, data, nullptr, tasks, cfg);
      }

      const double c = model.intercept();
      const double miss = std::max({0.0, first - c, c - last});
      worst = std::max(worst, miss);
      ++fits;
      matched += miss <= 2 * step;
    }
  }
  return {matched == fits, format("%zu/%zu fits within %.0e of the grid argmin (worst %.2e), %.0f s", matched, fits,
                                  2 * step, worst, seconds_since(t0))};
}

// ---------------------------------------------------------------------------- synthetic grid

Outcome grid_coverage() {
  const auto t0 = std::chrono::steady_clock::now();
  TempDir dir("accept_grid");
  DatasetSpec spec;
  spec.preset = "taxi";
  save_dataset(dir / "taxi", generate_dataset(spec, 7, {}, 10, 1));

  RunConfig cfg;
  cfg.seed = 7;
  cfg.out = (dir / "run").string();
  cfg.dataset.path = (dir / "taxi").string();
  cfg.model.type = "joint";
  cfg.model.filters = {8};
  cfg.model.kernel = 3;
  cfg.model.keep = 0.95;
  cfg.train.epochs = 60;
  cfg.train.learning_rate = 0.003;
  cfg.train.batch_size = 32;
  cfg.train.patience = 10;
  cfg.levels = QuantileLevels{0.05, 0.1, 0.9, 0.95};
  cfg.intervals = {{0.05, 0.95}, {0.1, 0.9}};
  cfg.lags = 10;
  cfg.horizon = 1;
  cfg.split = {0.6, 0.2, 0.2};

  const SeriesDataset ds = load_series(cfg.dataset);
  const PreparedData data = prepare_run_data(cfg, ds, cfg.seed);
  const TrainOutcome trained = train_run(cfg, data, cfg.seed);
  const RunEvaluation ev = evaluate_run(trained.model, data, ds, cfg.intervals);
  const double secs = seconds_since(t0);

  const double icp90 = ev.report.intervals.at(0).metrics.icp, icp80 = ev.report.intervals.at(1).metrics.icp;
  const double cross_rate = double(ev.report.crossing->num_crosses) / double(ev.report.points);
  const double ratio = *ev.report.tilted_total / *ev.oracle->tilted_total;
  const bool ok = std::abs(icp90 - 0.9) <= 0.05 && std::abs(icp80 - 0.8) <= 0.05 && cross_rate < 0.001 &&
                  ratio <= 1.2 && secs < 1200;
  return {ok, format("ICP 90%% %.3f, ICP 80%% %.3f, crossings %.4f%% of %zu pairs, tilted %.2f vs oracle %.2f "
                     "(ratio %.3f), %zu epochs, %.0f s",
                     icp90, icp80, 100 * cross_rate, ev.report.points, *ev.report.tilted_total,
                     *ev.oracle->tilted_total, ratio, trained.histories[0].result.history.size(), secs)};
}

// ---------------------------------------------------------------------------- MC dropout

Outcome mc_dropout() {
  const auto t0 = std::chrono::steady_clock::now();
  TempDir dir("accept_mc");
  Rng rng(31);
  const std::size_t n = 5000;  // 1000 test points keep the coverage standard error near 0.013
  SeriesDataset ds;
  ds.x = Tensor({n});
  ds.y = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) {
    ds.x[i] = rng.uniform(-2, 2);
    ds.y[i] = std::sin(3 * ds.x[i]) + 0.5 * rng.normal();
  }
  save_dataset(dir / "gauss", ds);

  RunConfig cfg;
  cfg.seed = 31;
  cfg.out = (dir / "run").string();
  cfg.dataset.path = (dir / "gauss").string();
  cfg.model.type = "mc_dropout";
  cfg.model.hidden = {{50, Activation::tanh}, {50, Activation::tanh}};
  cfg.model.keep = 0.95;
  cfg.model.mc_samples = 100;
  cfg.model.calibration = "zhu";
  cfg.train.epochs = 1000;
  cfg.train.learning_rate = 0.003;
  cfg.train.patience = 0;
  cfg.train.restore_best = false;
  cfg.levels = QuantileLevels{0.05, 0.1, 0.9, 0.95};
  cfg.intervals = {{0.05, 0.95}, {0.1, 0.9}};
  cfg.split = {0.6, 0.2, 0.2};
  const AggregatedReport r = execute_train(cfg);

  const double icp90 = r.mean_of("ICP 90%"), icp80 = r.mean_of("ICP 80%"), crosses = r.mean_of("Num. Crosses");
  const bool ok = std::abs(icp90 - 0.9) <= 0.05 && std::abs(icp80 - 0.8) <= 0.05 && crosses == 0.0;
  return {ok, format("ICP 90%% %.3f, ICP 80%% %.3f, crossings %.0f, %.0f s", icp90, icp80, crosses,
                     seconds_since(t0))};
}

// ---------------------------------------------------------------------------- regularization

// Relative rise of the last tenth of a curve over its minimum.
double late_rise(const std::vector<double>& curve) {
  const double lowest = *std::min_element(curve.begin(), curve.end());
  const std::size_t tail = std::max<std::size_t>(1, curve.size() / 10);
  double late = 0.0;
  for (std::size_t i = curve.size() - tail; i < curve.size(); ++i) late += curve[i];
  return (late / double(tail) - lowest) / lowest;
}

Outcome regularization() {
  const auto t0 = std::chrono::steady_clock::now();
  const SeriesDataset ds = load_motorcycle(motorcycle_csv());
  const std::size_t epochs = 5000, repeats = 16;
  MLPConfig mc;
  mc.hidden = {{50, Activation::tanh}, {10, Activation::tanh}};
  std::vector<double> joint_curve(epochs, 0.0), indep_curve(epochs, 0.0);
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng split_rng(derive_seed(r, 100));
    const PreparedData p = prepare_points(ds, {2.0 / 3, 1.0 / 3}, split_rng);
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.learning_rate = 0.003;
    cfg.seed = r;
    cfg.patience = 0;
    cfg.restore_best = false;
    // the test split is tracked every epoch but never used to stop or select
    Rng init(r);
    JointMLP joint(mc, 1 + kMotoLevels.size(), init);
    const TrainResult jr = fit_joint(joint, p.train, &p.test, kMotoLevels, cfg);
    const auto members = fit_independent(
        [&](std::size_t k) {
          Rng member_rng(member_seed(r, k));
          return std::make_unique<JointMLP>(mc, 1, member_rng);
        },
        p.train, &p.test, kMotoLevels, cfg);
    for (std::size_t e = 0; e < epochs; ++e) {
      joint_curve[e] += jr.history.at(e).val_loss / repeats;
      for (const auto& m : members) indep_curve[e] += m.result.history.at(e).val_loss / repeats;
    }
  }
  const double jrise = late_rise(joint_curve), irise = late_rise(indep_curve);
  const bool ok = irise >= 0.05 && jrise < irise;
  return {ok, format("test loss rise after the minimum: independent %.1f%%, joint %.1f%% (%zu repeats, %zu epochs), "
                     "%.0f s",
                     100 * irise, 100 * jrise, repeats, epochs, seconds_since(t0))};
}

// ---------------------------------------------------------------------------- determinism

int cli(std::vector<std::string> args, std::string& errors) {
  args.insert(args.begin(), "jmqr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  errors += err.str();
  return code;
}

Outcome determinism() {
  TempDir dir("accept_det");
  write_text(dir / "config.json", nlohmann::json{{"seed", 5},
                                                 {"dataset", {{"preset", "tiny"}}},
                                                 {"model", {{"filters", {4}}, {"keep", 0.8}}},
                                                 {"train", {{"epochs", 4}}},
                                                 {"lags", 5}}
                                          .dump());
  std::vector<std::string> reports;
  std::string errors;
  for (const char* name : {"first", "second"}) {
    const std::string data = (dir / name / "data").string(), run = (dir / name / "run").string();
    const std::string cfg = (dir / "config.json").string();
    if (cli({"generate", "--config", cfg, "--out", data}, errors) != 0 ||
        cli({"train", "--config", cfg, "--data", data, "--out", run}, errors) != 0 ||
        cli({"evaluate", run}, errors) != 0) {
      return {false, "pipeline failed: " + errors};
    }
    reports.push_back(read_text(std::filesystem::path(run) / "report.json") +
                      read_text(std::filesystem::path(run) / "report.csv"));
  }
  return {reports[0] == reports[1],
          format("report.json and report.csv %s (%zu bytes)", reports[0] == reports[1] ? "identical" : "differ",
                 reports[0].size())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"motorcycle", motorcycle},         {"gradients", gradients},
      {"pinball-oracle", pinball_oracle}, {"grid-coverage", grid_coverage},
      {"mc-dropout", mc_dropout},         {"regularization", regularization},
      {"determinism", determinism},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
