#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dmtl/network.hpp"
#include "dmtl/tensor.hpp"

namespace dmtl {

struct OptimizerConfig {
  double base_lr = 0.1;
  double momentum = 0.99;
  double rho = 0.9;  // mean-square smoothing
  double weight_decay = 5e-5;
  double epsilon = 1e-10;
  std::vector<std::size_t> milestones;  // strictly increasing iteration counts

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// base_lr / 10^(number of milestones ≤ iteration).
double lr_schedule(std::size_t iteration, const OptimizerConfig& config);

/// Milestones at 60% and 80% of the run.
std::vector<std::size_t> default_milestones(std::size_t iterations);

struct ParamState {
  Tensor accumulator;  // running mean of grad², ≥ 0
  Tensor momentum;
};

/// One ParamState per model tensor, in ModelParams::named_tensors order.
struct OptimState {
  std::vector<ParamState> slots;

  static OptimState for_model(const ModelParams& params);
};

void rmsprop_step(Tensor& param, const Tensor& grad, ParamState& state, double lr, const OptimizerConfig& config);

}  // namespace dmtl
