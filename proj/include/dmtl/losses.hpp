#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dmtl/tape.hpp"
#include "dmtl/tensor.hpp"

namespace dmtl {

enum class CenterLossForm {
  squared_halved,  // ½‖x − C‖², differentiable at x = C
  literal_norm,    // ‖x − C‖
};

std::string_view to_string(CenterLossForm f);
CenterLossForm parse_center_form(std::string_view name);

/// One center per identity class, updated outside the gradient tape.
struct CenterBank {
  Tensor centers;             // [K × d]
  double update_rate = 0.5;   // β in (0, 1]

  static CenterBank zeros(std::size_t classes, std::size_t width, double update_rate);
  std::size_t num_classes() const { return centers.rows(); }
  std::size_t width() const { return centers.cols(); }
};

/// Per-task scalar losses L_1..L_T.
using LossVector = std::vector<double>;

double cross_entropy(const Tensor& logits, std::size_t label);
double center_loss(const Tensor& embedding, const CenterBank& bank, std::size_t label, CenterLossForm form);
double verification_loss(const Tensor& logits, const Tensor& embedding, std::size_t label, const CenterBank& bank,
                         double alpha, CenterLossForm form = CenterLossForm::squared_halved);
double weighted_total(std::span<const double> losses, std::span<const double> weights);

/// C_c ← C_c − β·(C_c − mean of the batch's class-c embeddings), classes absent
/// from the batch untouched.
CenterBank update_centers(const CenterBank& bank, const Tensor& embeddings, std::span<const std::size_t> labels);

// Batched, recorded on the tape; each is the mean over rows.
Var cross_entropy_loss(Var logits, std::span<const std::size_t> labels);
Var center_loss(Var embeddings, const CenterBank& bank, std::span<const std::size_t> labels, CenterLossForm form);
Var verification_loss(Var logits, Var embeddings, std::span<const std::size_t> labels, const CenterBank& bank,
                      double alpha, CenterLossForm form);
/// Σ wᵢ·Lᵢ with the weights entering as constants.
Var weighted_total(std::span<const Var> losses, std::span<const double> weights);

}  // namespace dmtl
