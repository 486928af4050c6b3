#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmtl/config.hpp"
#include "dmtl/taskweights.hpp"

namespace dmtl {

/// Static weights with `weight` on task `task` and the remainder spread over
/// the other tasks, equally or in proportion to `reference`.
std::vector<double> sweep_weights(std::size_t tasks, std::size_t task, double weight, bool equal_remainder,
                                  const std::vector<double>& reference);

struct SweepRow {
  double weight = 0.0;
  std::vector<double> accuracy;  // per task, final test accuracy
};

/// One static-weight run per entry of `weights`. Runs execute concurrently
/// (at most `sweep_concurrency()` at once); with `out_dir` each run writes to
/// its own subdirectory.
std::vector<SweepRow> run_sweep(const TrainConfig& base, std::size_t task, const std::vector<double>& weights,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string sweep_csv(const std::vector<SweepRow>& rows, std::size_t tasks);

/// DMTL_THREADS when set to a positive integer, else the hardware thread count.
std::size_t sweep_concurrency();

struct SimulationOptions {
  SchedulerKind kind = SchedulerKind::dynamic_l4;
  GradientForm gradient = GradientForm::full;
  std::size_t steps = 100;
  double learning_rate = 0.1;
  std::vector<double> z{1.0};
};

/// Iterates scheduler_step on scripted losses (one LossVector per step) with a
/// fixed z. Row t holds the weights after update t.
std::vector<std::vector<double>> simulate_weights(const std::vector<LossVector>& script,
                                                  const SimulationOptions& options);

/// Reads a loss script: header L1..LT, one row per step.
std::vector<LossVector> read_loss_script(const std::filesystem::path& path);

std::string simulation_csv(const std::vector<std::vector<double>>& weights, const std::vector<LossVector>& script);

}  // namespace dmtl
