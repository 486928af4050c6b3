#include "dmtl/optim.hpp"

#include "dmtl/errors.hpp"
#include "dmtl/kernels.hpp"

namespace dmtl {

double lr_schedule(std::size_t iteration, const OptimizerConfig& config) {
  double lr = config.base_lr;
  for (auto m : config.milestones) {
    if (iteration >= m) lr /= 10.0;
  }
  return lr;
}

std::vector<std::size_t> default_milestones(std::size_t iterations) {
  std::vector<std::size_t> m{iterations * 6 / 10, iterations * 8 / 10};
  // Very short runs would otherwise get the same milestone twice.
  if (m[1] == m[0]) m.pop_back();
  return m;
}

OptimState OptimState::for_model(const ModelParams& params) {
  OptimState s;
  for (const auto& [name, t] : params.named_tensors()) {
    s.slots.push_back(ParamState{Tensor(t->shape(), 0.0), Tensor(t->shape(), 0.0)});
  }
  return s;
}

void rmsprop_step(Tensor& param, const Tensor& grad, ParamState& state, double lr, const OptimizerConfig& config) {
  if (param.shape() != grad.shape() || param.shape() != state.accumulator.shape() ||
      param.shape() != state.momentum.shape()) {
    throw DimensionError("rmsprop_step: parameter " + shape_string(param.shape()) + ", gradient " +
                         shape_string(grad.shape()) + ", state " + shape_string(state.accumulator.shape()));
  }
  kernels::rmsprop_update(param.data(), grad.data(), state.accumulator.data(), state.momentum.data(),
                          {lr, config.rho, config.momentum, config.weight_decay, config.epsilon});
}

}  // namespace dmtl
