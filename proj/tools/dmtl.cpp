#include <algorithm>
#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dmtl/checkpoint.hpp"
#include "dmtl/config.hpp"
#include "dmtl/errors.hpp"
#include "dmtl/evaluation.hpp"
#include "dmtl/experiments.hpp"
#include "dmtl/gradcheck.hpp"
#include "dmtl/svg.hpp"
#include "dmtl/text.hpp"
#include "dmtl/trainer.hpp"

namespace fs = std::filesystem;
using namespace dmtl;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> log_every;

  void attach(CLI::App* app, bool config_required) {
    auto* opt = app->add_option("--config", config, "JSON run configuration");
    if (config_required) opt->required();
    app->add_option("--seed", seed, "override the configured seed");
    app->add_option("--out-dir", out_dir, "output directory (overrides output.dir)");
    app->add_option("--log-every", log_every, "console progress interval in iterations");
  }

  TrainConfig load() const {
    TrainConfig cfg = load_config(config);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.output.dir = *out_dir;
    if (log_every) cfg.output.log_every = *log_every;
    cfg.finalize();
    return cfg;
  }

  fs::path output(const TrainConfig* cfg) const {
    if (out_dir) return *out_dir;
    return cfg ? cfg->output.dir : fs::path("run");
  }
};

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (auto cell : split(text, ',')) {
    const auto v = parse_double(trim(cell));
    if (!v) throw ArgumentError(what + ": '" + std::string(cell) + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

void plot_columns(const fs::path& csv, const std::vector<std::string>& columns, const fs::path& out,
                  const std::string& title) {
  LineChart chart = chart_from_table(read_csv_table(csv), columns);
  chart.title = title;
  write_text(out, render_svg(chart));
}

int cmd_train(const Common& common) {
  const TrainConfig cfg = common.load();
  const fs::path dir = common.output(&cfg);
  RunOptions opts;
  opts.out_dir = dir;
  opts.verbose = true;
  const RunResult result = run_training(cfg, opts);

  std::vector<std::string> weights, losses;
  for (std::size_t t = 1; t <= cfg.num_tasks(); ++t) {
    weights.push_back("w" + std::to_string(t));
    losses.push_back("L" + std::to_string(t));
  }
  if (!result.history.records.empty()) {
    plot_columns(dir / "log.csv", weights, dir / "weights.svg", "task weights");
    plot_columns(dir / "log.csv", losses, dir / "losses.svg", "task losses");
  }
  const bool has_identification = std::any_of(cfg.tasks.begin(), cfg.tasks.end(), [](const TaskSpec& t) {
    return t.kind == TaskKind::identification;
  });
  const EvalReport report =
      evaluate(result.state.model, result.data.test, cfg.tasks,
               has_identification ? Protocol::identification : Protocol::verification, EvalOptions{.seed = cfg.seed});
  write_text(dir / "metrics.csv", format_report(report));
  std::cout << format_report(report);
  return 0;
}

int cmd_sweep(const Common& common, std::size_t task, const std::string& weight_list) {
  const TrainConfig cfg = common.load();
  if (task < 1 || task > cfg.num_tasks()) {
    throw ArgumentError("--task must be in 1.." + std::to_string(cfg.num_tasks()));
  }
  const fs::path dir = common.output(&cfg);
  fs::create_directories(dir);
  const auto weights = parse_list(weight_list, "--weights");
  const auto rows = run_sweep(cfg, task - 1, weights, dir);
  write_text(dir / "sweep.csv", sweep_csv(rows, cfg.num_tasks()));
  std::vector<std::string> columns;
  for (std::size_t t = 1; t <= cfg.num_tasks(); ++t) columns.push_back("acc" + std::to_string(t));
  plot_columns(dir / "sweep.csv", columns, dir / "sweep.svg", "accuracy vs static weight of task " + std::to_string(task));
  std::cout << sweep_csv(rows, cfg.num_tasks());
  return 0;
}

int cmd_gradcheck(const Common& common, std::size_t instances, const std::optional<std::string>& fault) {
  GradcheckOptions opts;
  opts.seed = common.seed.value_or(0);
  opts.instances = instances;
  opts.fault_op = fault;
  const GradcheckReport report = run_gradcheck(opts);
  std::cout << format_gradcheck(report);
  if (!report.passed()) {
    for (const auto& e : report.entries) {
      if (!e.passed) std::cerr << "gradcheck failed: " << e.op << '\n';
    }
    return 1;
  }
  return 0;
}

int cmd_simulate(const Common& common, const std::string& script_path, const std::string& scheduler,
                 const std::string& gradient, std::size_t steps, double lr, const std::string& z) {
  SimulationOptions opts;
  opts.kind = parse_scheduler_kind(scheduler);
  opts.gradient = parse_gradient_form(gradient);
  opts.steps = steps;
  opts.learning_rate = lr;
  opts.z = parse_list(z, "--z");
  const auto script = read_loss_script(script_path);
  const auto weights = simulate_weights(script, opts);
  const fs::path dir = common.output(nullptr);
  fs::create_directories(dir);
  write_text(dir / "simulate.csv", simulation_csv(weights, script));
  std::vector<std::string> columns;
  for (std::size_t t = 1; t <= script.front().size(); ++t) columns.push_back("w" + std::to_string(t));
  if (!weights.empty()) plot_columns(dir / "simulate.csv", columns, dir / "simulate.svg", scheduler + " weights");
  std::cout << simulation_csv(weights, script);
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& protocol_name,
             const std::string& split_name) {
  const TrainConfig cfg = common.load();
  const Protocol protocol = parse_protocol(protocol_name);
  const TrainingState state = unpack_state(read_checkpoint(checkpoint));
  const DataSplits data = load_data(cfg);
  if (split_name != "test" && split_name != "train") throw ArgumentError("--split must be train or test");
  const Dataset& ds = split_name == "train" ? data.train : data.test;
  const EvalReport report = evaluate(state.model, ds, cfg.tasks, protocol, EvalOptions{.seed = cfg.seed});
  const std::string text = format_report(report);
  if (common.out_dir) {
    fs::create_directories(*common.out_dir);
    write_text(fs::path(*common.out_dir) / ("metrics_" + protocol_name + ".csv"), text);
  }
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic multi-task weighting: training, sweeps, gradient checks, simulation, evaluation, plots"};
  app.require_subcommand(1);

  Common common;
  auto* train = app.add_subcommand("train", "train one model from a config");
  common.attach(train, true);

  auto* sweep = app.add_subcommand("sweep", "static-weight sweep over one task");
  common.attach(sweep, true);
  std::size_t sweep_task = 1;
  std::string sweep_weights = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  sweep->add_option("--task", sweep_task, "1-based index of the swept task")->required();
  sweep->add_option("--weights", sweep_weights, "comma-separated weights in (0,1]");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  common.attach(gradcheck, false);
  std::size_t instances = 100;
  std::optional<std::string> fault;
  gradcheck->add_option("--instances", instances, "random instances per op");
  gradcheck->add_option("--fault-op", fault, "corrupt this op's backward rule (test hook)");

  auto* simulate = app.add_subcommand("simulate", "weight trajectories on scripted losses");
  common.attach(simulate, false);
  std::string script, scheduler = "dynamic_l4", gradient = "full", z = "1";
  std::size_t steps = 100;
  double lr = 0.1;
  simulate->add_option("--script", script, "CSV with columns L1..LT, one row per step")->required();
  simulate->add_option("--scheduler", scheduler, "static | dynamic_l4 | naive_dynamic");
  simulate->add_option("--gradient", gradient, "full | paper");
  simulate->add_option("--steps", steps, "number of scheduler steps");
  simulate->add_option("--lr", lr, "weight-module learning rate");
  simulate->add_option("--z", z, "fixed feature vector, comma-separated");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint under a verification or identification protocol");
  common.attach(eval, true);
  std::string checkpoint, protocol = "verification", eval_split = "test";
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--protocol", protocol, "verification | c2p | p2c | identification");
  eval->add_option("--split", eval_split, "train | test");

  auto* plot = app.add_subcommand("plot", "render CSV columns as an SVG line chart");
  std::string csv, columns, out;
  plot->add_option("--csv", csv, "input CSV")->required();
  plot->add_option("--columns", columns, "comma-separated column names")->required();
  plot->add_option("--out", out, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(common);
    if (sweep->parsed()) return cmd_sweep(common, sweep_task, sweep_weights);
    if (gradcheck->parsed()) return cmd_gradcheck(common, instances, fault);
    if (simulate->parsed()) return cmd_simulate(common, script, scheduler, gradient, steps, lr, z);
    if (eval->parsed()) return cmd_eval(common, checkpoint, protocol, eval_split);
    if (plot->parsed()) {
      std::vector<std::string> names;
      for (auto c : split(columns, ',')) names.emplace_back(trim(c));
      plot_columns(csv, names, out, "");
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error in field '" << e.field() << "': " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
