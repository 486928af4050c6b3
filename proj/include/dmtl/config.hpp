#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmtl/losses.hpp"
#include "dmtl/network.hpp"
#include "dmtl/optim.hpp"
#include "dmtl/synthdata.hpp"
#include "dmtl/taskweights.hpp"

namespace dmtl {

enum class TaskKind {
  verification,    // cross-entropy + α·center loss on the bottleneck, both modalities
  identification  // cross-entropy on one modality (or both)
};

enum class ModalitySelection { A, B, both };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::identification;
  ModalitySelection modality = ModalitySelection::both;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

enum class ThetaUpdate { weighted, unweighted_sum };

struct CsvSource {
  std::filesystem::path train;
  std::filesystem::path test;
  CsvSchema schema;

  friend bool operator==(const CsvSource&, const CsvSource&) = default;
};

struct DatasetConfig {
  std::optional<ModalitySpec> synthetic;
  std::size_t test_samples_per_class = 10;  // synthetic test split, per modality
  std::optional<CsvSource> csv;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ModelConfig {
  std::vector<std::size_t> trunk_widths{64, 64};
  std::vector<std::size_t> branch_hidden{32};
  std::size_t bottleneck = 16;
  Activation activation = Activation::relu;
  double dropout_rate = 0.0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LossConfig {
  double alpha = 0.003;
  double beta = 0.5;
  CenterLossForm center_form = CenterLossForm::squared_halved;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct SchedulerConfig {
  SchedulerKind kind = SchedulerKind::dynamic_l4;
  GradientForm gradient = GradientForm::full;
  std::vector<double> static_weights;
  std::optional<double> lr;  // base η_Ψ; follows the network schedule when unset
  bool train_bias = true;

  friend bool operator==(const SchedulerConfig&, const SchedulerConfig&) = default;
};

struct OutputConfig {
  std::filesystem::path dir = "run";
  std::size_t log_every = 100;         // console progress
  std::size_t checkpoint_every = 0;    // 0: final checkpoint only
  std::size_t eval_every = 0;          // 0: final evaluation only

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct SweepConfig {
  bool equal_remainder = true;  // else proportional to scheduler.static_weights

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t iterations = 2000;
  std::size_t batch_size = 90;
  ThetaUpdate theta_update = ThetaUpdate::weighted;
  DatasetConfig dataset;
  ModelConfig model;
  std::vector<TaskSpec> tasks;
  LossConfig losses;
  OptimizerConfig optimizer;
  SchedulerConfig scheduler;
  OutputConfig output;
  SweepConfig sweep;

  std::size_t num_tasks() const { return tasks.size(); }
  // Fills derived defaults (milestones) and checks invariants; throws
  // ConfigError naming the first invalid field.
  void finalize();

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Three tasks: cross-modal verification, modality-A identification,
/// modality-B identification.
std::vector<TaskSpec> default_tasks();

std::string to_string(TaskKind k);
std::string to_string(ModalitySelection m);
std::string to_string(ThetaUpdate t);

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const TrainConfig& config);

}  // namespace dmtl
