#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmtl/tensor.hpp"

namespace dmtl {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

/// Reverse-mode gradients for the leaves of one tape. Leaves that do not
/// influence the differentiated output hold zeros of their own shape.
class Gradients {
 public:
  const Tensor& operator[](Var leaf) const;
  std::size_t nodes_visited() const noexcept { return visited_; }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
  std::size_t visited_ = 0;
};

/// Ordered record of primitive operations. Every node keeps its forward rule so
/// the tape can be replayed after leaf values change (finite differences use
/// this), and its backward rule for reverse accumulation in tape order.
class Tape {
 public:
  using Inputs = std::span<const Tensor* const>;
  using ForwardFn = std::function<Tensor(Inputs)>;
  // Accumulates into the gradient slots of inputs that need one; a null slot
  // means that input is not differentiated.
  using BackwardFn =
      std::function<void(const Tensor& grad_out, Inputs inputs, const Tensor& out, std::span<Tensor* const> grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const;
  std::string_view op(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Replaces a leaf's value; dependent nodes are stale until replay().
  void set_value(Var leaf, Tensor value);
  // Recomputes every non-leaf node in recording order.
  void replay();

  Gradients backward(Var output) const;

  Var record(std::string_view op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward);

  // Test hook: scales the backward contribution of every node with this op name.
  void inject_fault(std::optional<std::string> op) { fault_op_ = std::move(op); }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool leaf = false;
    bool requires_grad = false;
    ForwardFn forward;
    BackwardFn backward;
  };

  void check(Var v) const;
  Tensor evaluate(const Node& node) const;

  std::vector<Node> nodes_;
  std::optional<std::string> fault_op_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives. Names match the op labels recorded on the tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_bias(Var x, Var bias);          // x[B×n] + bias[n] per row
Var relu(Var x);
Var tanh(Var x);
Var dropout(Var x, const Tensor& mask);  // mask already carries 1/(1−p)
Var softmax(Var v);                      // along the last dimension
Var cross_entropy(Var logits, std::span<const std::size_t> labels);  // per row, shape [B]
Var select_rows(Var x, std::span<const std::size_t> rows);
Var sum(Var x);
Var mean(Var x);
Var mean_rows(Var x);                    // [B×n] → [n]
Var dot(Var a, Var b);
Var row_sq_norm(Var x);                  // ‖row‖² per row, shape [B]
Var row_norm(Var x);                     // ‖row‖ per row, shape [B]

/// Names of every primitive above, in declaration order.
std::span<const std::string_view> primitive_names();

// ---------------------------------------------------------------------------
// Value-level counterparts (no tape).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& v);
Tensor transpose(const Tensor& a);
Tensor mean_rows(const Tensor& x);

}  // namespace dmtl
