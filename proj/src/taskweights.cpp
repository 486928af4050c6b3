#include "dmtl/taskweights.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "dmtl/errors.hpp"

namespace dmtl {

WeightModuleState WeightModuleState::zeros(std::size_t tasks, std::size_t z_width, double learning_rate) {
  if (tasks == 0 || z_width == 0) throw ArgumentError("weight module needs at least one task and feature");
  if (!(learning_rate > 0.0)) throw ArgumentError("weight module learning rate must be positive");
  return WeightModuleState{Tensor({tasks, z_width}, 0.0), Tensor({tasks}, 0.0), learning_rate, true};
}

bool WeightModuleState::is_zero() const {
  auto zero = [](double v) { return v == 0.0; };
  return std::all_of(psi.values().begin(), psi.values().end(), zero) &&
         std::all_of(bias.values().begin(), bias.values().end(), zero);
}

std::string_view to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::static_weights: return "static";
    case SchedulerKind::dynamic_l4: return "dynamic_l4";
    case SchedulerKind::naive_dynamic: return "naive_dynamic";
  }
  return "dynamic_l4";
}

SchedulerKind parse_scheduler_kind(std::string_view name) {
  if (name == "static") return SchedulerKind::static_weights;
  if (name == "dynamic_l4") return SchedulerKind::dynamic_l4;
  if (name == "naive_dynamic") return SchedulerKind::naive_dynamic;
  throw ArgumentError("unknown scheduler kind '" + std::string(name) + "'");
}

std::string_view to_string(GradientForm f) { return f == GradientForm::full ? "full" : "paper"; }

GradientForm parse_gradient_form(std::string_view name) {
  if (name == "full") return GradientForm::full;
  if (name == "paper") return GradientForm::paper;
  throw ArgumentError("unknown gradient form '" + std::string(name) + "'");
}

namespace {

Tensor feature_vector(const Tensor& z, const WeightModuleState& state) {
  Tensor v = z.rank() == 2 ? mean_rows(z) : z;
  if (v.size() != state.z_width()) {
    throw DimensionError("weight module: feature width " + std::to_string(v.size()) + " vs state width " +
                         std::to_string(state.z_width()));
  }
  return v;
}

Tensor logits_of(const Tensor& zv, const WeightModuleState& state) {
  Tensor f({state.num_tasks()});
  for (std::size_t i = 0; i < state.num_tasks(); ++i) {
    double s = state.bias[i];
    auto row = state.psi.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * zv[c];
    f[i] = s;
  }
  return f;
}

std::vector<double> floored_inverse(const LossVector& losses) {
  std::vector<double> inv(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    double l = losses[i];
    if (!(l > kLossFloor)) {
      spdlog::warn("task {} loss {} is at or below the floor {}; clamping before division", i + 1, l, kLossFloor);
      l = kLossFloor;
    }
    inv[i] = 1.0 / l;
  }
  return inv;
}

void check_losses(const LossVector& losses, const WeightModuleState& state) {
  if (losses.size() != state.num_tasks()) {
    throw ArgumentError("weight module: " + std::to_string(losses.size()) + " losses for " +
                        std::to_string(state.num_tasks()) + " tasks");
  }
}

// ∇ψᵢ = cᵢ·z and ∇bᵢ = cᵢ for per-task coefficients cᵢ.
WeightGradient outer(const std::vector<double>& coeff, const Tensor& zv, const WeightModuleState& state) {
  WeightGradient g{Tensor(state.psi.shape(), 0.0), Tensor(state.bias.shape(), 0.0)};
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    auto row = g.psi.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = coeff[i] * zv[c];
    g.bias[i] = coeff[i];
  }
  return g;
}

WeightModuleState descend(const WeightModuleState& state, const WeightGradient& g) {
  WeightModuleState next = state;
  for (std::size_t i = 0; i < next.psi.size(); ++i) next.psi[i] -= state.learning_rate * g.psi[i];
  if (state.train_bias) {
    for (std::size_t i = 0; i < next.bias.size(); ++i) next.bias[i] -= state.learning_rate * g.bias[i];
  }
  return next;
}

}  // namespace

Tensor weight_logits(const Tensor& z, const WeightModuleState& state) {
  return logits_of(feature_vector(z, state), state);
}

Tensor task_weights(const Tensor& z, const WeightModuleState& state) { return softmax(weight_logits(z, state)); }

double l4_loss(std::span<const double> weights, const LossVector& losses) {
  if (weights.size() != losses.size()) {
    throw ArgumentError("l4_loss: " + std::to_string(weights.size()) + " weights but " +
                        std::to_string(losses.size()) + " losses");
  }
  const auto inv = floored_inverse(losses);
  double s = 0.0;
  for (std::size_t i = 0; i < inv.size(); ++i) s += weights[i] * inv[i];
  return s;
}

WeightGradient grad_l4_paper(const Tensor& z, const WeightModuleState& state, const LossVector& losses) {
  check_losses(losses, state);
  const Tensor zv = feature_vector(z, state);
  const Tensor w = softmax(logits_of(zv, state));
  const auto inv = floored_inverse(losses);
  std::vector<double> coeff(inv.size());
  for (std::size_t i = 0; i < inv.size(); ++i) coeff[i] = inv[i] * w[i] * (1.0 - w[i]);
  return outer(coeff, zv, state);
}

WeightGradient grad_l4_full(const Tensor& z, const WeightModuleState& state, const LossVector& losses) {
  check_losses(losses, state);
  const Tensor zv = feature_vector(z, state);
  const Tensor w = softmax(logits_of(zv, state));
  const auto inv = floored_inverse(losses);
  double mean_inv = 0.0;
  for (std::size_t j = 0; j < inv.size(); ++j) mean_inv += w[j] * inv[j];
  std::vector<double> coeff(inv.size());
  for (std::size_t i = 0; i < inv.size(); ++i) coeff[i] = w[i] * (inv[i] - mean_inv);
  return outer(coeff, zv, state);
}

WeightGradient grad_total_loss(const Tensor& z, const WeightModuleState& state, const LossVector& losses) {
  check_losses(losses, state);
  const Tensor zv = feature_vector(z, state);
  const Tensor w = softmax(logits_of(zv, state));
  double weighted = 0.0;
  for (std::size_t j = 0; j < losses.size(); ++j) weighted += w[j] * losses[j];
  std::vector<double> coeff(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) coeff[i] = w[i] * (losses[i] - weighted);
  return outer(coeff, zv, state);
}

double two_task_ratio(double loss1, double loss2, const Tensor& z, const WeightModuleState& state) {
  if (state.num_tasks() != 2) throw UsageError("two_task_ratio: closed form holds for exactly two tasks");
  if (!state.is_zero()) throw UsageError("two_task_ratio: closed form requires a zero-initialized state");
  const Tensor zv = feature_vector(z, state);
  const auto inv = floored_inverse({loss1, loss2});
  double zz = 0.0;
  for (double v : zv.values()) zz += v * v;
  if (state.train_bias) zz += 1.0;
  // a₁ = a₂ = 1 at zero init, so a₁a₂/(a₁+a₂)² = ¼.
  return std::exp(state.learning_rate * (inv[1] - inv[0]) * 0.25 * zz);
}

void validate_static_weights(std::span<const double> weights) {
  if (weights.empty()) throw ArgumentError("static weights: none given");
  double s = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ArgumentError("static weights must be non-negative");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ArgumentError("static weights must sum to 1");
}

SchedulerResult scheduler_step(const Scheduler& scheduler, const Tensor& z, const WeightModuleState& state,
                               const LossVector& losses) {
  switch (scheduler.kind) {
    case SchedulerKind::static_weights:
      validate_static_weights(scheduler.static_weights);
      return SchedulerResult{state, Tensor::vector(scheduler.static_weights)};
    case SchedulerKind::dynamic_l4: {
      const WeightGradient g = scheduler.gradient == GradientForm::full ? grad_l4_full(z, state, losses)
                                                                        : grad_l4_paper(z, state, losses);
      WeightModuleState next = descend(state, g);
      Tensor w = task_weights(z, next);
      return SchedulerResult{std::move(next), std::move(w)};
    }
    case SchedulerKind::naive_dynamic: {
      WeightModuleState next = descend(state, grad_total_loss(z, state, losses));
      Tensor w = task_weights(z, next);
      return SchedulerResult{std::move(next), std::move(w)};
    }
  }
  throw UsageError("scheduler_step: unknown scheduler kind");
}

Var weight_logits(Var z_row, Var psi, Var bias) { return add_bias(matmul(z_row, transpose(psi)), bias); }

Var l4_loss(Var weights, const LossVector& losses) {
  const auto inv = floored_inverse(losses);
  Tape& tape = *weights.tape;
  return dot(weights, tape.constant(Tensor(tape.value(weights).shape(), inv)));
}

}  // namespace dmtl
