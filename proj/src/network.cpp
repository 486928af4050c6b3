#include "dmtl/network.hpp"

#include <cmath>

#include "dmtl/errors.hpp"
#include "dmtl/random.hpp"

namespace dmtl {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw ArgumentError("unknown activation '" + std::string(name) + "'");
}

std::size_t ModelParams::input_width() const {
  if (!trunk.empty()) return trunk.front().weight.rows();
  if (!branches.empty()) {
    const Branch& b = branches.front();
    return b.hidden.empty() ? b.bottleneck.weight.rows() : b.hidden.front().weight.rows();
  }
  return 0;
}

std::size_t ModelParams::z_width() const {
  return trunk.empty() ? input_width() : trunk.back().weight.cols();
}

namespace {

template <typename Self, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect(Self& self) {
  std::vector<std::pair<std::string, Ptr>> out;
  for (std::size_t l = 0; l < self.trunk.size(); ++l) {
    const std::string p = "trunk." + std::to_string(l);
    out.emplace_back(p + ".weight", &self.trunk[l].weight);
    out.emplace_back(p + ".bias", &self.trunk[l].bias);
  }
  for (std::size_t t = 0; t < self.branches.size(); ++t) {
    auto& br = self.branches[t];
    const std::string p = "branch" + std::to_string(t + 1);
    for (std::size_t l = 0; l < br.hidden.size(); ++l) {
      out.emplace_back(p + ".hidden" + std::to_string(l) + ".weight", &br.hidden[l].weight);
      out.emplace_back(p + ".hidden" + std::to_string(l) + ".bias", &br.hidden[l].bias);
    }
    out.emplace_back(p + ".bottleneck.weight", &br.bottleneck.weight);
    out.emplace_back(p + ".bottleneck.bias", &br.bottleneck.bias);
    out.emplace_back(p + ".classifier.weight", &br.classifier.weight);
    out.emplace_back(p + ".classifier.bias", &br.classifier.bias);
  }
  return out;
}

DenseLayer make_layer(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  return DenseLayer{xavier_init(fan_in, fan_out, seed), Tensor({fan_out}, 0.0)};
}

void check_layer(const DenseLayer& layer, std::size_t expected_in, const std::string& where) {
  if (layer.weight.rank() != 2 || layer.weight.rows() != expected_in) {
    throw DimensionError(where + ": weight " + shape_string(layer.weight.shape()) + " does not accept width " +
                         std::to_string(expected_in));
  }
  if (layer.bias.rank() != 1 || layer.bias.size() != layer.weight.cols()) {
    throw DimensionError(where + ": bias " + shape_string(layer.bias.shape()) + " does not match weight " +
                         shape_string(layer.weight.shape()));
  }
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

Var dense(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

constexpr std::uint64_t kBranchSlotBase = 1000;

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
  return collect<ModelParams, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors() const {
  return collect<const ModelParams, const Tensor*>(*this);
}

Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  if (fan_in == 0 || fan_out == 0) throw ArgumentError("xavier_init: fan_in and fan_out must be at least 1");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_in, fan_out});
  for (double& v : w.values()) v = dist(rng);
  return w;
}

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_width == 0) throw ArgumentError("architecture: input width must be positive");
  if (arch.classes.empty()) throw ArgumentError("architecture: at least one task branch is required");
  if (arch.bottleneck == 0) throw ArgumentError("architecture: bottleneck width must be positive");
  if (!(arch.dropout_rate >= 0.0 && arch.dropout_rate < 1.0)) {
    throw ArgumentError("architecture: dropout rate must lie in [0,1)");
  }
  ModelParams m;
  m.activation = arch.activation;
  m.dropout_rate = arch.dropout_rate;
  std::uint64_t layer_id = 0;
  std::size_t width = arch.input_width;
  for (auto w : arch.trunk_widths) {
    m.trunk.push_back(make_layer(width, w, derive_seed(seed, {layer_id++})));
    width = w;
  }
  const std::size_t z_width = width;
  for (auto k : arch.classes) {
    if (k < 2) throw ArgumentError("architecture: each branch needs at least 2 classes");
    Branch br;
    width = z_width;
    for (auto w : arch.branch_hidden) {
      br.hidden.push_back(make_layer(width, w, derive_seed(seed, {layer_id++})));
      width = w;
    }
    br.bottleneck = make_layer(width, arch.bottleneck, derive_seed(seed, {layer_id++}));
    br.classifier = make_layer(arch.bottleneck, k, derive_seed(seed, {layer_id++}));
    m.branches.push_back(std::move(br));
  }
  return m;
}

void validate(const ModelParams& params) {
  std::size_t width = params.input_width();
  for (std::size_t l = 0; l < params.trunk.size(); ++l) {
    check_layer(params.trunk[l], width, "trunk." + std::to_string(l));
    width = params.trunk[l].weight.cols();
  }
  const std::size_t z = width;
  for (std::size_t t = 0; t < params.branches.size(); ++t) {
    const Branch& br = params.branches[t];
    const std::string p = "branch" + std::to_string(t + 1);
    width = z;
    for (std::size_t l = 0; l < br.hidden.size(); ++l) {
      check_layer(br.hidden[l], width, p + ".hidden" + std::to_string(l));
      width = br.hidden[l].weight.cols();
    }
    check_layer(br.bottleneck, width, p + ".bottleneck");
    check_layer(br.classifier, br.bottleneck.weight.cols(), p + ".classifier");
  }
}

ModelBinding::ModelBinding(Tape& tape, const ModelParams& params) : tape_(&tape), params_(&params) {
  validate(params);
  for (const auto& layer : params.trunk) {
    vars_.push_back(tape.leaf(layer.weight));
    vars_.push_back(tape.leaf(layer.bias));
  }
  for (const auto& br : params.branches) {
    branch_offset_.push_back(vars_.size());
    for (const auto& layer : br.hidden) {
      vars_.push_back(tape.leaf(layer.weight));
      vars_.push_back(tape.leaf(layer.bias));
    }
    vars_.push_back(tape.leaf(br.bottleneck.weight));
    vars_.push_back(tape.leaf(br.bottleneck.bias));
    vars_.push_back(tape.leaf(br.classifier.weight));
    vars_.push_back(tape.leaf(br.classifier.bias));
  }
}

Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed, std::uint64_t layer_slot) {
  Tensor mask(shape, 0.0);
  Rng rng = make_rng(seed, {layer_slot});
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = keep(rng) ? scale : 0.0;
  return mask;
}

namespace {

Var maybe_dropout(const ModelBinding& model, Var h, const ForwardOptions& opts, std::uint64_t slot) {
  const double rate = model.params().dropout_rate;
  if (!opts.train_mode || rate <= 0.0) return h;
  return dropout(h, dropout_mask(model.tape().value(h).shape(), rate, opts.seed, slot));
}

}  // namespace

Var forward_trunk(const ModelBinding& model, Var x, const ForwardOptions& opts) {
  const ModelParams& p = model.params();
  const Tensor& xv = model.tape().value(x);
  if (xv.rank() != 2 || xv.cols() != p.input_width()) {
    throw DimensionError("forward: input " + shape_string(xv.shape()) + " does not match trunk input width " +
                         std::to_string(p.input_width()));
  }
  Var h = x;
  for (std::size_t l = 0; l < p.trunk.size(); ++l) {
    h = activate(dense(h, model.trunk_weight(l), model.trunk_bias(l)), p.activation);
    h = maybe_dropout(model, h, opts, l);
  }
  return h;
}

BranchVars forward_branch(const ModelBinding& model, std::size_t task, Var z, const ForwardOptions& opts) {
  const ModelParams& p = model.params();
  if (task >= p.num_tasks()) throw ArgumentError("forward: task index " + std::to_string(task) + " out of range");
  const Branch& br = p.branches[task];
  Var h = z;
  std::size_t l = 0;
  for (; l < br.hidden.size(); ++l) {
    h = activate(dense(h, model.branch_weight(task, l), model.branch_bias(task, l)), p.activation);
    h = maybe_dropout(model, h, opts, kBranchSlotBase * (task + 1) + l);
  }
  Var embedding = dense(h, model.branch_weight(task, l), model.branch_bias(task, l));
  Var logits = dense(embedding, model.branch_weight(task, l + 1), model.branch_bias(task, l + 1));
  return BranchVars{embedding, logits};
}

ForwardVars forward(const ModelBinding& model, Var x, std::span<const std::size_t> task_set,
                    const ForwardOptions& opts) {
  if (task_set.empty()) throw ArgumentError("forward: task set is empty");
  ForwardVars out;
  out.z = forward_trunk(model, x, opts);
  out.branches.resize(model.params().num_tasks());
  for (auto t : task_set) out.branches.at(t) = forward_branch(model, t, out.z, opts);
  return out;
}

ForwardResult forward(const ModelParams& params, const Tensor& x, std::span<const std::size_t> task_set,
                      const ForwardOptions& opts) {
  Tape tape;
  ModelBinding model(tape, params);
  ForwardVars vars = forward(model, tape.constant(x), task_set, opts);
  ForwardResult result;
  result.z = tape.value(vars.z);
  result.logits.resize(params.num_tasks());
  result.embeddings.resize(params.num_tasks());
  for (std::size_t t = 0; t < vars.branches.size(); ++t) {
    if (!vars.branches[t]) continue;
    result.logits[t] = tape.value(vars.branches[t]->logits);
    result.embeddings[t] = tape.value(vars.branches[t]->embedding);
  }
  return result;
}

std::vector<std::size_t> all_tasks(const ModelParams& params) {
  std::vector<std::size_t> t(params.num_tasks());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = i;
  return t;
}

}  // namespace dmtl
