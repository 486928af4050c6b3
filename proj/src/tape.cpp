#include "dmtl/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "dmtl/errors.hpp"
#include "dmtl/kernels.hpp"

namespace dmtl {

const Tensor& Gradients::operator[](Var leaf) const {
  if (leaf.tape != tape_ || leaf.id >= grads_.size()) {
    throw UsageError("gradient requested for a value that is not on this tape");
  }
  return grads_[leaf.id];
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw UsageError("value is not recorded on this tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.leaf = true;
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

std::string_view Tape::op(Var v) const {
  check(v);
  return nodes_[v.id].op;
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id].requires_grad;
}

void Tape::set_value(Var leaf, Tensor value) {
  check(leaf);
  Node& node = nodes_[leaf.id];
  if (!node.leaf) throw UsageError("set_value on a non-leaf node");
  if (node.value.shape() != value.shape()) {
    throw DimensionError("set_value shape " + shape_string(value.shape()) + " differs from leaf shape " +
                         shape_string(node.value.shape()));
  }
  node.value = std::move(value);
}

Tensor Tape::evaluate(const Node& node) const {
  std::vector<const Tensor*> in;
  in.reserve(node.inputs.size());
  for (auto id : node.inputs) in.push_back(&nodes_[id].value);
  return node.forward(Inputs(in));
}

void Tape::replay() {
  for (auto& node : nodes_) {
    if (!node.leaf) node.value = evaluate(node);
  }
}

Var Tape::record(std::string_view op, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward) {
  Node node;
  node.op = op;
  for (const Var& v : inputs) {
    check(v);
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  node.forward = std::move(forward);
  node.backward = std::move(backward);
  node.value = evaluate(node);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Gradients Tape::backward(Var output) const {
  check(output);
  if (nodes_[output.id].value.size() != 1) {
    throw UsageError("backward needs a scalar output, got shape " +
                     shape_string(nodes_[output.id].value.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[output.id] = Tensor(nodes_[output.id].value.shape(), 1.0);

  Gradients result;
  result.tape_ = this;
  std::vector<const Tensor*> in;
  std::vector<Tensor*> slots;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (grads[i].empty() || !node.requires_grad) continue;
    ++result.visited_;
    if (node.leaf) continue;
    in.clear();
    slots.clear();
    for (auto id : node.inputs) {
      in.push_back(&nodes_[id].value);
      if (nodes_[id].requires_grad) {
        if (grads[id].empty()) grads[id] = Tensor(nodes_[id].value.shape(), 0.0);
        slots.push_back(&grads[id]);
      } else {
        slots.push_back(nullptr);
      }
    }
    if (fault_op_ && *fault_op_ == node.op) {
      Tensor skewed = grads[i];
      for (double& g : skewed.values()) g *= 1.01;
      node.backward(skewed, Inputs(in), node.value, std::span<Tensor* const>(slots));
    } else {
      node.backward(grads[i], Inputs(in), node.value, std::span<Tensor* const>(slots));
    }
  }

  result.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].leaf) continue;
    result.grads_[i] = grads[i].empty() ? Tensor(nodes_[i].value.shape(), 0.0) : std::move(grads[i]);
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 19> kPrimitives = {
    "matmul", "transpose", "add",  "sub",      "mul",         "scale", "add_bias",
    "relu",   "tanh",      "dropout", "softmax", "cross_entropy", "select_rows", "sum",
    "mean",   "mean_rows", "dot",  "row_sq_norm", "row_norm"};

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw UsageError("operation on an unbound value");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw UsageError("operands recorded on different tapes");
  return tape_of(a);
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, std::string_view op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

void accumulate(Tensor* slot, const Tensor& g) {
  if (!slot) return;
  auto& dst = slot->values();
  const auto& src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor softmax_rows(const Tensor& v) {
  Tensor out = v;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& x : row) {
      x = std::exp(x - mx);
      s += x;
    }
    for (double& x : row) x /= s;
  }
  return out;
}

void check_labels(const Tensor& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(logits.shape()));
  }
  for (auto y : labels) {
    if (y >= logits.cols()) {
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range for " +
                          std::to_string(logits.cols()) + " classes");
    }
  }
}

}  // namespace

std::span<const std::string_view> primitive_names() { return kPrimitives; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  kernels::gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Tensor softmax(const Tensor& v) {
  if (v.empty()) throw ArgumentError("softmax: empty input");
  return softmax_rows(v);
}

Tensor mean_rows(const Tensor& x) {
  Tensor out({x.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += row[c];
  }
  for (double& v : out.values()) v /= static_cast<double>(x.rows());
  return out;
}

Var matmul(Var a, Var b) {
  auto& tape = tape_of(a, b);
  return tape.record(
      "matmul", {a, b}, [](Tape::Inputs in) { return matmul(*in[0], *in[1]); },
      [](const Tensor& g, Tape::Inputs in, const Tensor&, std::span<Tensor* const> grads) {
        const Tensor& A = *in[0];
        const Tensor& B = *in[1];
        const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
        if (grads[0]) {
          Tensor da({m, k});
          kernels::gemm_a_bt(g.data(), B.data(), da.data(), m, n, k);
          accumulate(grads[0], da);
        }
        if (grads[1]) {
          Tensor db({k, n});
          kernels::gemm_at_b(A.data(), g.data(), db.data(), k, m, n);
          accumulate(grads[1], db);
        }
      });
}

Var transpose(Var a) {
  return tape_of(a).record(
      "transpose", {a}, [](Tape::Inputs in) { return transpose(*in[0]); },
      [](const Tensor& g, Tape::Inputs, const Tensor&, std::span<Tensor* const> grads) {
        accumulate(grads[0], transpose(g));
      });
}

Var add(Var a, Var b) {
  auto& tape = tape_of(a, b);
  require_same_shape(tape.value(a), tape.value(b), "add");
  return tape.record(
      "add", {a, b},
      [](Tape::Inputs in) {
        Tensor out = *in[0];
        accumulate(&out, *in[1]);
        return out;
      },
      [](const Tensor& g, Tape::Inputs, const Tensor&, std::span<Tensor* const> grads) {
        accumulate(grads[0], g);
        accumulate(grads[1], g);
      });
}

Var sub(Var a, Var b) {
  auto& tape = tape_of(a, b);
  require_same_shape(tape.value(a), tape.value(b), "sub");
  return tape.record(
      "sub", {a, b},
      [](Tape::Inputs in) {
        Tensor out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= (*in[1])[i];
        return out;
      },
      [](const Tensor& g, Tape::Inputs, const Tensor&, std::span<Tensor* const> grads) {
        accumulate(grads[0], g);
        if (grads[1]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] -= g[i];
        }
      });
}

Var mul(Var a, Var b) {
  auto& tape = tape_of(a, b);
  require_same_shape(tape.value(a), tape.value(b), "mul");
  return tape.record(
      "mul", {a, b},
      [](Tape::Inputs in) {
        Tensor out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*in[1])[i];
        return out;
      },
      [](const Tensor& g, Tape::Inputs in, const Tensor&, std::span<Tensor* const> grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (grads[0]) (*grads[0])[i] += g[i] * (*in[1])[i];
          if (grads[1]) (*grads[1])[i] += g[i] * (*in[0])[i];
        }
      });
}

Var scale(Var a, double factor) {
  return tape_of(a).record(
      "scale", {a},
      [factor](Tape::Inputs in) {
        Tensor out = *in[0];
        for (double& v : out.values()) v *= factor;
        return out;
      },
      [factor](const Tensor& g, Tape::Inputs, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += factor * g[i];
      });
}

Var add_bias(Var x, Var bias) {
  auto& tape = tape_of(x, bias);
  const Tensor& xv = tape.value(x);
  const Tensor& bv = tape.value(bias);
  if (bv.rank() != 1 || bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match " +
                         shape_string(xv.shape()));
  }
  return tape.record(
      "add_bias", {x, bias},
      [](Tape::Inputs in) {
        Tensor out = *in[0];
        const Tensor& b = *in[1];
        for (std::size_t r = 0; r < out.rows(); ++r) {
          auto row = out.row(r);
          for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
        }
        return out;
      },
      [](const Tensor& g, Tape::Inputs, const Tensor&, std::span<Tensor* const> grads) {
        accumulate(grads[0], g);
        if (grads[1]) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            auto row = g.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) (*grads[1])[c] += row[c];
          }
        }
      });
}

Var relu(Var x) {
  return tape_of(x).record(
      "relu", {x},
      [](Tape::Inputs in) {
        Tensor out = *in[0];
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        return out;
      },
      [](const Tensor& g, Tape::Inputs in, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if ((*in[0])[i] > 0.0) (*grads[0])[i] += g[i];
        }
      });
}

Var tanh(Var x) {
  return tape_of(x).record(
      "tanh", {x},
      [](Tape::Inputs in) {
        Tensor out = *in[0];
        for (double& v : out.values()) v = std::tanh(v);
        return out;
      },
      [](const Tensor& g, Tape::Inputs, const Tensor& out, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * (1.0 - out[i] * out[i]);
      });
}

Var dropout(Var x, const Tensor& mask) {
  auto& tape = tape_of(x);
  require_same_shape(tape.value(x), mask, "dropout");
  return tape.record(
      "dropout", {x},
      [mask](Tape::Inputs in) {
        Tensor out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
        return out;
      },
      [mask](const Tensor& g, Tape::Inputs, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * mask[i];
      });
}

Var softmax(Var v) {
  return tape_of(v).record(
      "softmax", {v}, [](Tape::Inputs in) { return softmax(*in[0]); },
      [](const Tensor& g, Tape::Inputs, const Tensor& y, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (std::size_t r = 0; r < y.rows(); ++r) {
          auto yr = y.row(r);
          auto gr = g.row(r);
          double gy = 0.0;
          for (std::size_t c = 0; c < yr.size(); ++c) gy += gr[c] * yr[c];
          auto dst = grads[0]->row(r);
          for (std::size_t c = 0; c < yr.size(); ++c) dst[c] += yr[c] * (gr[c] - gy);
        }
      });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  auto& tape = tape_of(logits);
  check_labels(tape.value(logits), labels);
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return tape.record(
      "cross_entropy", {logits},
      [y](Tape::Inputs in) {
        const Tensor& z = *in[0];
        Tensor out({z.rows()});
        for (std::size_t r = 0; r < z.rows(); ++r) {
          auto row = z.row(r);
          const double mx = *std::max_element(row.begin(), row.end());
          double s = 0.0;
          for (double v : row) s += std::exp(v - mx);
          out[r] = mx + std::log(s) - row[y[r]];
        }
        return out;
      },
      [y](const Tensor& g, Tape::Inputs in, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const Tensor p = softmax_rows(*in[0]);
        for (std::size_t r = 0; r < p.rows(); ++r) {
          auto pr = p.row(r);
          auto dst = grads[0]->row(r);
          for (std::size_t c = 0; c < pr.size(); ++c) {
            dst[c] += g[r] * (pr[c] - (c == y[r] ? 1.0 : 0.0));
          }
        }
      });
}

Var select_rows(Var x, std::span<const std::size_t> rows) {
  auto& tape = tape_of(x);
  const Tensor& xv = tape.value(x);
  if (rows.empty()) throw ArgumentError("select_rows: no rows selected");
  for (auto r : rows) {
    if (r >= xv.rows()) {
      throw DimensionError("select_rows: row " + std::to_string(r) + " outside " + shape_string(xv.shape()));
    }
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape.record(
      "select_rows", {x},
      [idx](Tape::Inputs in) {
        const Tensor& src = *in[0];
        Tensor out({idx.size(), src.cols()});
        for (std::size_t i = 0; i < idx.size(); ++i) {
          std::copy_n(src.row(idx[i]).begin(), src.cols(), out.row(i).begin());
        }
        return out;
      },
      [idx](const Tensor& g, Tape::Inputs, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (std::size_t i = 0; i < idx.size(); ++i) {
          auto dst = grads[0]->row(idx[i]);
          auto src = g.row(i);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
      });
}

Var sum(Var x) {
  return tape_of(x).record(
      "sum", {x},
      [](Tape::Inputs in) {
        double s = 0.0;
        for (double v : in[0]->values()) s += v;
        return Tensor::scalar(s);
      },
      [](const Tensor& g, Tape::Inputs, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (double& v : grads[0]->values()) v += g[0];
      });
}

Var mean(Var x) {
  return tape_of(x).record(
      "mean", {x},
      [](Tape::Inputs in) {
        double s = 0.0;
        for (double v : in[0]->values()) s += v;
        return Tensor::scalar(s / static_cast<double>(in[0]->size()));
      },
      [](const Tensor& g, Tape::Inputs in, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const double d = g[0] / static_cast<double>(in[0]->size());
        for (double& v : grads[0]->values()) v += d;
      });
}

Var mean_rows(Var x) {
  return tape_of(x).record(
      "mean_rows", {x}, [](Tape::Inputs in) { return mean_rows(*in[0]); },
      [](const Tensor& g, Tape::Inputs in, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const double inv = 1.0 / static_cast<double>(in[0]->rows());
        for (std::size_t r = 0; r < in[0]->rows(); ++r) {
          auto dst = grads[0]->row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c] * inv;
        }
      });
}

Var dot(Var a, Var b) {
  auto& tape = tape_of(a, b);
  require_same_shape(tape.value(a), tape.value(b), "dot");
  return tape.record(
      "dot", {a, b},
      [](Tape::Inputs in) {
        double s = 0.0;
        for (std::size_t i = 0; i < in[0]->size(); ++i) s += (*in[0])[i] * (*in[1])[i];
        return Tensor::scalar(s);
      },
      [](const Tensor& g, Tape::Inputs in, const Tensor&, std::span<Tensor* const> grads) {
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          if (grads[0]) (*grads[0])[i] += g[0] * (*in[1])[i];
          if (grads[1]) (*grads[1])[i] += g[0] * (*in[0])[i];
        }
      });
}

Var row_sq_norm(Var x) {
  return tape_of(x).record(
      "row_sq_norm", {x},
      [](Tape::Inputs in) {
        const Tensor& v = *in[0];
        Tensor out({v.rows()});
        for (std::size_t r = 0; r < v.rows(); ++r) {
          double s = 0.0;
          for (double e : v.row(r)) s += e * e;
          out[r] = s;
        }
        return out;
      },
      [](const Tensor& g, Tape::Inputs in, const Tensor&, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const Tensor& v = *in[0];
        for (std::size_t r = 0; r < v.rows(); ++r) {
          auto src = v.row(r);
          auto dst = grads[0]->row(r);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += 2.0 * g[r] * src[c];
        }
      });
}

Var row_norm(Var x) {
  return tape_of(x).record(
      "row_norm", {x},
      [](Tape::Inputs in) {
        const Tensor& v = *in[0];
        Tensor out({v.rows()});
        for (std::size_t r = 0; r < v.rows(); ++r) {
          double s = 0.0;
          for (double e : v.row(r)) s += e * e;
          out[r] = std::sqrt(s);
        }
        return out;
      },
      [](const Tensor& g, Tape::Inputs in, const Tensor& out, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const Tensor& v = *in[0];
        for (std::size_t r = 0; r < v.rows(); ++r) {
          if (out[r] == 0.0) continue;  // subgradient 0 at the origin
          auto src = v.row(r);
          auto dst = grads[0]->row(r);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += g[r] * src[c] / out[r];
        }
      });
}

}  // namespace dmtl
