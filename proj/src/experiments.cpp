#include "dmtl/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "dmtl/errors.hpp"
#include "dmtl/svg.hpp"
#include "dmtl/text.hpp"
#include "dmtl/trainer.hpp"

namespace dmtl {

std::vector<double> sweep_weights(std::size_t tasks, std::size_t task, double weight, bool equal_remainder,
                                  const std::vector<double>& reference) {
  if (!(weight > 0.0 && weight <= 1.0)) {
    throw ArgumentError("sweep weight " + format_double(weight) + " is outside (0,1]");
  }
  if (task >= tasks) throw ArgumentError("sweep task index " + std::to_string(task) + " out of range");
  std::vector<double> w(tasks, 0.0);
  w[task] = weight;
  if (tasks == 1) return w;
  const double rest = 1.0 - weight;
  double ref_sum = 0.0;
  if (!equal_remainder && reference.size() == tasks) {
    for (std::size_t i = 0; i < tasks; ++i) {
      if (i != task) ref_sum += reference[i];
    }
  }
  for (std::size_t i = 0; i < tasks; ++i) {
    if (i == task) continue;
    w[i] = ref_sum > 0.0 ? rest * reference[i] / ref_sum : rest / static_cast<double>(tasks - 1);
  }
  return w;
}

std::size_t sweep_concurrency() {
  if (const char* env = std::getenv("DMTL_THREADS")) {
    if (auto n = parse_index(env); n && *n > 0) return *n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<SweepRow> run_sweep(const TrainConfig& base, std::size_t task, const std::vector<double>& weights,
                                const std::optional<std::filesystem::path>& out_dir) {
  std::vector<TrainConfig> configs;
  for (double w : weights) {
    TrainConfig cfg = base;
    cfg.scheduler.kind = SchedulerKind::static_weights;
    cfg.scheduler.static_weights =
        sweep_weights(base.num_tasks(), task, w, base.sweep.equal_remainder, base.scheduler.static_weights);
    cfg.finalize();
    configs.push_back(std::move(cfg));
  }

  std::vector<SweepRow> rows(weights.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        RunOptions opts;
        if (out_dir) opts.out_dir = *out_dir / ("w" + format_double(weights[i]));
        const RunResult r = run_training(configs[i], opts);
        rows[i] = SweepRow{weights[i], r.history.evals.back().accuracy};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(sweep_concurrency(), std::max<std::size_t>(configs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, std::size_t tasks) {
  std::string out = "weight";
  for (std::size_t t = 1; t <= tasks; ++t) out += ",acc" + std::to_string(t);
  out += '\n';
  for (const auto& r : rows) {
    out += format_double(r.weight);
    for (double a : r.accuracy) out += "," + format_double(a);
    out += '\n';
  }
  return out;
}

std::vector<std::vector<double>> simulate_weights(const std::vector<LossVector>& script,
                                                  const SimulationOptions& options) {
  if (script.size() < options.steps) {
    throw ArgumentError("loss script has " + std::to_string(script.size()) + " rows but " +
                        std::to_string(options.steps) + " steps were requested");
  }
  if (script.empty()) throw ArgumentError("loss script is empty");
  const std::size_t tasks = script.front().size();
  const Tensor z = Tensor::vector(options.z);
  WeightModuleState state = WeightModuleState::zeros(tasks, options.z.size(), options.learning_rate);
  Scheduler scheduler{options.kind, {}, options.gradient};
  if (options.kind == SchedulerKind::static_weights) scheduler.static_weights.assign(tasks, 1.0 / tasks);
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t < options.steps; ++t) {
    if (script[t].size() != tasks) {
      throw ArgumentError("loss script row " + std::to_string(t + 1) + " has " + std::to_string(script[t].size()) +
                          " losses, expected " + std::to_string(tasks));
    }
    SchedulerResult r = scheduler_step(scheduler, z, state, script[t]);
    state = std::move(r.state);
    out.push_back(r.weights.values());
  }
  return out;
}

std::vector<LossVector> read_loss_script(const std::filesystem::path& path) {
  const CsvTable table = read_csv_table(path);
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] != "L" + std::to_string(i + 1)) {
      throw SchemaError(path.string() + ": expected column 'L" + std::to_string(i + 1) + "', found '" +
                        table.header[i] + "'");
    }
  }
  return table.rows;
}

std::string simulation_csv(const std::vector<std::vector<double>>& weights, const std::vector<LossVector>& script) {
  const std::size_t tasks = weights.empty() ? (script.empty() ? 0 : script.front().size()) : weights.front().size();
  std::string out = "step";
  for (std::size_t i = 1; i <= tasks; ++i) out += ",w" + std::to_string(i);
  for (std::size_t i = 1; i <= tasks; ++i) out += ",L" + std::to_string(i);
  out += '\n';
  for (std::size_t t = 0; t < weights.size(); ++t) {
    out += std::to_string(t);
    for (double w : weights[t]) out += "," + format_double(w);
    for (double l : script[t]) out += "," + format_double(l);
    out += '\n';
  }
  return out;
}

}  // namespace dmtl
