#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmtl/tape.hpp"
#include "dmtl/tensor.hpp"

namespace dmtl {

enum class Activation { relu, tanh, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Tensor weight;  // [fan_in × fan_out]
  Tensor bias;    // [fan_out]
};

/// Task-specific head: hidden layers, a linear bottleneck embedding, then the
/// classification layer over that embedding.
struct Branch {
  std::vector<DenseLayer> hidden;
  DenseLayer bottleneck;
  DenseLayer classifier;
};

struct Architecture {
  std::size_t input_width = 0;
  std::vector<std::size_t> trunk_widths{64, 64};
  std::vector<std::size_t> branch_hidden{32};
  std::size_t bottleneck = 16;
  std::vector<std::size_t> classes;  // one entry per task branch
  Activation activation = Activation::relu;
  double dropout_rate = 0.0;
};

/// Hard-parameter-sharing model Θ: one trunk shared by every task, one branch
/// per task.
struct ModelParams {
  std::vector<DenseLayer> trunk;
  std::vector<Branch> branches;
  Activation activation = Activation::relu;
  double dropout_rate = 0.0;

  std::size_t input_width() const;
  std::size_t z_width() const;
  std::size_t num_tasks() const { return branches.size(); }

  // Stable, documented order: trunk layers, then each branch's hidden layers,
  // bottleneck and classifier. Checkpoints and optimizer state follow it.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
};

/// Uniform Glorot draw in ±√(6/(fan_in+fan_out)), deterministic per seed.
Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

ModelParams init_model(const Architecture& arch, std::uint64_t seed);

/// Throws DimensionError if layer shapes do not chain trunk → every branch.
void validate(const ModelParams& params);

/// Tape leaves for every parameter tensor of a model, in named_tensors order.
class ModelBinding {
 public:
  ModelBinding(Tape& tape, const ModelParams& params);

  Tape& tape() const { return *tape_; }
  const ModelParams& params() const { return *params_; }
  std::span<const Var> vars() const { return vars_; }

  Var trunk_weight(std::size_t layer) const { return vars_[2 * layer]; }
  Var trunk_bias(std::size_t layer) const { return vars_[2 * layer + 1]; }
  // Layers of branch t: hidden..., bottleneck, classifier.
  Var branch_weight(std::size_t task, std::size_t layer) const { return vars_[branch_offset_[task] + 2 * layer]; }
  Var branch_bias(std::size_t task, std::size_t layer) const {
    return vars_[branch_offset_[task] + 2 * layer + 1];
  }

 private:
  Tape* tape_;
  const ModelParams* params_;
  std::vector<Var> vars_;
  std::vector<std::size_t> branch_offset_;
};

struct ForwardOptions {
  bool train_mode = false;
  std::uint64_t seed = 0;
};

struct BranchVars {
  Var embedding;
  Var logits;
};

struct ForwardVars {
  Var z;
  std::vector<std::optional<BranchVars>> branches;  // indexed by task
};

struct ForwardResult {
  Tensor z;
  std::vector<std::optional<Tensor>> logits;      // indexed by task
  std::vector<std::optional<Tensor>> embeddings;  // indexed by task
};

/// Inverted-dropout keep mask (entries 0 or 1/(1−p)) for one layer.
Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed, std::uint64_t layer_slot);

Var forward_trunk(const ModelBinding& model, Var x, const ForwardOptions& opts);
BranchVars forward_branch(const ModelBinding& model, std::size_t task, Var z, const ForwardOptions& opts);

/// Trunk once, then every requested branch from that same Z.
ForwardVars forward(const ModelBinding& model, Var x, std::span<const std::size_t> task_set,
                    const ForwardOptions& opts);

/// Value-level forward on a scratch tape.
ForwardResult forward(const ModelParams& params, const Tensor& x, std::span<const std::size_t> task_set,
                      const ForwardOptions& opts);

std::vector<std::size_t> all_tasks(const ModelParams& params);

}  // namespace dmtl
