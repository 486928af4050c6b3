#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dmtl/losses.hpp"
#include "dmtl/tape.hpp"
#include "dmtl/tensor.hpp"

namespace dmtl {

/// Losses below this are clamped before they are used as divisors.
inline constexpr double kLossFloor = 1e-8;

/// Parameters Ψ = {ψᵢ, bᵢ} of the weight-generating softmax layer. Kept apart
/// from ModelParams: nothing in the network's update ever touches them.
struct WeightModuleState {
  Tensor psi;   // [T × d_z], row i is ψᵢ
  Tensor bias;  // [T]
  double learning_rate = 0.1;
  bool train_bias = true;

  static WeightModuleState zeros(std::size_t tasks, std::size_t z_width, double learning_rate);
  std::size_t num_tasks() const { return psi.rows(); }
  std::size_t z_width() const { return psi.cols(); }
  bool is_zero() const;
};

enum class SchedulerKind { static_weights, dynamic_l4, naive_dynamic };
enum class GradientForm {
  full,   // exact gradient of Σ wᵢ/Lᵢ through the softmax Jacobian
  paper,  // per-task form (1/Lᵢ)·wᵢ(1−wᵢ)·z without softmax cross terms
};

std::string_view to_string(SchedulerKind k);
SchedulerKind parse_scheduler_kind(std::string_view name);
std::string_view to_string(GradientForm f);
GradientForm parse_gradient_form(std::string_view name);

struct Scheduler {
  SchedulerKind kind = SchedulerKind::dynamic_l4;
  std::vector<double> static_weights;  // used by static_weights only
  GradientForm gradient = GradientForm::full;
};

struct WeightGradient {
  Tensor psi;
  Tensor bias;
};

struct SchedulerResult {
  WeightModuleState state;
  Tensor weights;
};

// z may be a single feature vector [d_z] or a batch [B × d_z]; a batch is
// reduced to its row mean, which equals averaging the logits over the batch.

/// fᵢ = ψᵢ·zᵀ + bᵢ. Linear on purpose: no rectification, negative logits survive.
Tensor weight_logits(const Tensor& z, const WeightModuleState& state);
/// softmax of weight_logits.
Tensor task_weights(const Tensor& z, const WeightModuleState& state);

/// Σ wᵢ/Lᵢ, losses held constant and floored at kLossFloor.
double l4_loss(std::span<const double> weights, const LossVector& losses);

WeightGradient grad_l4_paper(const Tensor& z, const WeightModuleState& state, const LossVector& losses);
WeightGradient grad_l4_full(const Tensor& z, const WeightModuleState& state, const LossVector& losses);
/// Gradient of Σ wᵢ·Lᵢ w.r.t. Ψ (the naive baseline's objective).
WeightGradient grad_total_loss(const Tensor& z, const WeightModuleState& state, const LossVector& losses);

/// Closed-form w₁/w₂ after one GradientForm::paper step from a zero state:
/// exp(η·(1/L₂ − 1/L₁)·¼·(z·zᵀ + [bias trained])). Throws UsageError unless the
/// state is zero and has exactly two tasks.
double two_task_ratio(double loss1, double loss2, const Tensor& z, const WeightModuleState& state);

/// One scheduler update. Returned weights come from the updated state.
SchedulerResult scheduler_step(const Scheduler& scheduler, const Tensor& z, const WeightModuleState& state,
                               const LossVector& losses);

/// Static weights must be non-negative and sum to one.
void validate_static_weights(std::span<const double> weights);

// Tape versions, used to cross-check the closed-form gradients.
Var weight_logits(Var z_row, Var psi, Var bias);  // z_row [1 × d_z] → [1 × T]
Var l4_loss(Var weights, const LossVector& losses);

}  // namespace dmtl
