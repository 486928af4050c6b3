#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmtl/checkpoint.hpp"
#include "dmtl/config.hpp"
#include "dmtl/losses.hpp"
#include "dmtl/network.hpp"
#include "dmtl/optim.hpp"
#include "dmtl/synthdata.hpp"
#include "dmtl/taskweights.hpp"

namespace dmtl {

/// One mixed-modality mini-batch; each task reads its own subset of rows.
struct TaskBatch {
  Tensor x;                                      // [B × input width]
  std::vector<std::size_t> labels;               // B identity labels
  std::vector<std::vector<std::size_t>> rows;    // per task, rows of x it is trained on
};

struct IterationRecord {
  std::size_t iteration = 0;
  double lr = 0.0;
  std::vector<double> weights;  // the weights that multiplied the losses this step
  LossVector losses;
  double l4 = 0.0;
  double total = 0.0;  // Σ wᵢ·Lᵢ

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct EvalRecord {
  std::size_t iteration = 0;
  std::vector<double> accuracy;  // per task, classifier accuracy on the test split
};

struct RunHistory {
  std::vector<IterationRecord> records;
  std::vector<EvalRecord> evals;
};

/// Everything a step mutates: Θ, Ψ, center banks (verification tasks only) and
/// the RMSprop state for Θ.
struct TrainingState {
  ModelParams model;
  WeightModuleState weights;
  std::vector<std::optional<CenterBank>> banks;
  OptimState optim;
  std::size_t iteration = 0;
};

struct DataSplits {
  Dataset train;
  Dataset test;
};

DataSplits load_data(const TrainConfig& config);

/// Rows of `data` a task trains and evaluates on.
std::vector<std::size_t> task_rows(const Dataset& data, const TaskSpec& task);

TrainingState init_training(const TrainConfig& config, const Dataset& train);

/// Half the batch from modality A, half from B, drawn with replacement;
/// deterministic in (config.seed, iteration).
TaskBatch sample_batch(const Dataset& train, const TrainConfig& config, std::size_t iteration);

/// Forward pass and Θ gradients for one batch without changing any state.
struct StepEvaluation {
  LossVector losses;
  Tensor weights;                       // from the pre-update Ψ (or static)
  Tensor z_mean;                        // batch mean of the trunk output Z
  std::vector<Tensor> theta_grads;      // in ModelParams::named_tensors order
  std::vector<std::optional<Tensor>> embeddings;  // verification tasks: bottleneck rows
};

StepEvaluation evaluate_step(const TrainingState& state, const TaskBatch& batch, const TrainConfig& config,
                             std::size_t iteration);

/// The dual update: Θ descends the (weighted or plain) total with weights held
/// fixed, Ψ takes one scheduler step with losses held fixed; both read the
/// pre-step state. Then centers move and the record is emitted.
IterationRecord train_step(TrainingState& state, const TaskBatch& batch, const TrainConfig& config,
                           std::size_t iteration);

double task_accuracy(const ModelParams& model, const Dataset& data, const TaskSpec& task, std::size_t task_index);

std::string csv_header(std::size_t tasks);
std::string csv_row(const IterationRecord& record);

NamedTensors pack_state(const TrainingState& state);
TrainingState unpack_state(const NamedTensors& tensors);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // no files are written when unset
  bool verbose = false;
  // Called after every step, e.g. to inspect Θ/Ψ between updates.
  std::function<void(const TrainingState&, const IterationRecord&)> observer;
};

struct RunResult {
  RunHistory history;
  TrainingState state;
  DataSplits data;
};

RunResult run_training(const TrainConfig& config, const RunOptions& options = {});

}  // namespace dmtl
