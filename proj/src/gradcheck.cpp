#include "dmtl/gradcheck.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "dmtl/finite_diff.hpp"
#include "dmtl/losses.hpp"
#include "dmtl/network.hpp"
#include "dmtl/random.hpp"
#include "dmtl/tape.hpp"
#include "dmtl/taskweights.hpp"
#include "dmtl/text.hpp"

namespace dmtl {

namespace {

// Builds one random instance on `tape` and returns its scalar output.
using Builder = std::function<Var(Tape&, Rng&)>;
// Returns the relative error of one instance against its oracle.
using Check = std::function<double(Rng&, const std::optional<std::string>&, double eps)>;

struct Registered {
  std::string op;
  double tolerance;  // 0 means the suite tolerance
  Check check;
};

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Entries are kept away from zero so kinked ops (relu, norms) are never
// probed across their kink.
Tensor random_tensor(Rng& rng, Shape shape, double spread = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> mag(0.1, spread);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.values()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// Reduces any output to a scalar through a fixed random projection.
Var project(Var out, Rng& rng) {
  Tape& tape = *out.tape;
  const Tensor& v = tape.value(out);
  if (v.size() == 1 && v.rank() == 1) return out;
  return sum(mul(out, tape.constant(random_tensor(rng, v.shape()))));
}

// Compares reverse-mode gradients of every differentiable leaf with central
// differences obtained by replaying the same tape.
double compare_with_finite_diff(const Builder& build, Rng& rng, const std::optional<std::string>& fault, double eps) {
  Tape tape;
  tape.inject_fault(fault);
  const Var out = build(tape, rng);
  const Gradients grads = tape.backward(out);
  double worst = 0.0;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    const Var leaf{&tape, id};
    if (tape.op(leaf) != "leaf" || !tape.requires_grad(leaf)) continue;
    const Tensor original = tape.value(leaf);
    const Tensor numeric = finite_diff(
        [&](const Tensor& x) {
          tape.set_value(leaf, x);
          tape.replay();
          return tape.value(out).item();
        },
        original, eps);
    tape.set_value(leaf, original);
    tape.replay();
    worst = std::max(worst, relative_error(grads[leaf], numeric));
  }
  return worst;
}

Check fd(Builder build) {
  return [build = std::move(build)](Rng& rng, const std::optional<std::string>& fault, double eps) {
    return compare_with_finite_diff(build, rng, fault, eps);
  };
}

Shape random_matrix_shape(Rng& rng) { return {pick(rng, 1, 4), pick(rng, 1, 5)}; }

std::vector<std::size_t> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<std::size_t> out(n);
  for (auto& y : out) y = pick(rng, 0, classes - 1);
  return out;
}

CenterBank random_bank(Rng& rng, std::size_t classes, std::size_t width) {
  return CenterBank{random_tensor(rng, {classes, width}), 0.5};
}

double max_rel(const WeightGradient& a, const Tensor& psi, const Tensor& bias) {
  return std::max(relative_error(a.psi, psi), relative_error(a.bias, bias));
}

// Closed-form Ψ gradient against reverse mode through the tape versions of
// weight_logits, softmax and the objective.
Check closed_form(bool l4) {
  return [l4](Rng& rng, const std::optional<std::string>& fault, double) {
    const std::size_t tasks = pick(rng, 2, 4), width = pick(rng, 1, 6);
    WeightModuleState state = WeightModuleState::zeros(tasks, width, 0.1);
    state.psi = random_tensor(rng, {tasks, width});
    state.bias = random_tensor(rng, {tasks});
    const Tensor z = random_tensor(rng, {width});
    LossVector losses(tasks);
    std::uniform_real_distribution<double> loss_draw(0.05, 3.0);
    for (double& l : losses) l = loss_draw(rng);

    Tape tape;
    tape.inject_fault(fault);
    const Var psi = tape.leaf(state.psi);
    const Var bias = tape.leaf(state.bias);
    const Var zrow = tape.constant(z.reshaped({1, width}));
    const Var w = softmax(weight_logits(zrow, psi, bias));
    Var objective;
    if (l4) {
      objective = l4_loss(w, losses);
    } else {
      objective = sum(mul(w, tape.constant(Tensor::matrix(1, tasks, losses))));
    }
    const Gradients g = tape.backward(objective);
    const WeightGradient closed = l4 ? grad_l4_full(z, state, losses) : grad_total_loss(z, state, losses);
    return max_rel(closed, g[psi], g[bias]);
  };
}

std::vector<Registered> registry() {
  std::vector<Registered> r;
  auto add_fd = [&](std::string op, Builder b) { r.push_back({std::move(op), 0.0, fd(std::move(b))}); };

  add_fd("matmul", [](Tape& t, Rng& rng) {
    const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
    return project(matmul(t.leaf(random_tensor(rng, {m, k})), t.leaf(random_tensor(rng, {k, n}))), rng);
  });
  add_fd("transpose", [](Tape& t, Rng& rng) { return project(transpose(t.leaf(random_tensor(rng, random_matrix_shape(rng)))), rng); });
  add_fd("add", [](Tape& t, Rng& rng) {
    const Shape s = random_matrix_shape(rng);
    return project(add(t.leaf(random_tensor(rng, s)), t.leaf(random_tensor(rng, s))), rng);
  });
  add_fd("sub", [](Tape& t, Rng& rng) {
    const Shape s = random_matrix_shape(rng);
    return project(sub(t.leaf(random_tensor(rng, s)), t.leaf(random_tensor(rng, s))), rng);
  });
  add_fd("mul", [](Tape& t, Rng& rng) {
    const Shape s = random_matrix_shape(rng);
    return project(mul(t.leaf(random_tensor(rng, s)), t.leaf(random_tensor(rng, s))), rng);
  });
  add_fd("scale", [](Tape& t, Rng& rng) {
    const double factor = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    return project(scale(t.leaf(random_tensor(rng, random_matrix_shape(rng))), factor), rng);
  });
  add_fd("add_bias", [](Tape& t, Rng& rng) {
    const Shape s = random_matrix_shape(rng);
    return project(add_bias(t.leaf(random_tensor(rng, s)), t.leaf(random_tensor(rng, {s[1]}))), rng);
  });
  add_fd("relu", [](Tape& t, Rng& rng) { return project(relu(t.leaf(random_tensor(rng, random_matrix_shape(rng)))), rng); });
  add_fd("tanh", [](Tape& t, Rng& rng) { return project(tanh(t.leaf(random_tensor(rng, random_matrix_shape(rng)))), rng); });
  add_fd("dropout", [](Tape& t, Rng& rng) {
    const Shape s = random_matrix_shape(rng);
    return project(dropout(t.leaf(random_tensor(rng, s)), dropout_mask(s, 0.5, rng(), 0)), rng);
  });
  add_fd("softmax", [](Tape& t, Rng& rng) { return project(softmax(t.leaf(random_tensor(rng, random_matrix_shape(rng), 3.0))), rng); });
  add_fd("cross_entropy", [](Tape& t, Rng& rng) {
    const std::size_t b = pick(rng, 1, 4), k = pick(rng, 2, 6);
    const auto labels = random_labels(rng, b, k);
    return project(cross_entropy(t.leaf(random_tensor(rng, {b, k}, 3.0)), labels), rng);
  });
  add_fd("select_rows", [](Tape& t, Rng& rng) {
    const Shape s = random_matrix_shape(rng);
    const auto rows = random_labels(rng, pick(rng, 1, 5), s[0]);  // repeats allowed
    return project(select_rows(t.leaf(random_tensor(rng, s)), rows), rng);
  });
  add_fd("sum", [](Tape& t, Rng& rng) { return sum(t.leaf(random_tensor(rng, random_matrix_shape(rng)))); });
  add_fd("mean", [](Tape& t, Rng& rng) { return mean(t.leaf(random_tensor(rng, random_matrix_shape(rng)))); });
  add_fd("mean_rows", [](Tape& t, Rng& rng) { return project(mean_rows(t.leaf(random_tensor(rng, random_matrix_shape(rng)))), rng); });
  add_fd("dot", [](Tape& t, Rng& rng) {
    const Shape s{pick(rng, 1, 6)};
    return dot(t.leaf(random_tensor(rng, s)), t.leaf(random_tensor(rng, s)));
  });
  add_fd("row_sq_norm", [](Tape& t, Rng& rng) { return project(row_sq_norm(t.leaf(random_tensor(rng, random_matrix_shape(rng)))), rng); });
  add_fd("row_norm", [](Tape& t, Rng& rng) { return project(row_norm(t.leaf(random_tensor(rng, random_matrix_shape(rng)))), rng); });

  for (auto form : {CenterLossForm::squared_halved, CenterLossForm::literal_norm}) {
    add_fd("center_loss." + std::string(to_string(form)), [form](Tape& t, Rng& rng) {
      const std::size_t b = pick(rng, 1, 4), k = pick(rng, 2, 5), d = pick(rng, 1, 5);
      const CenterBank bank = random_bank(rng, k, d);
      const auto labels = random_labels(rng, b, k);
      // Offsets from the centers stay well clear of zero for the unsquared norm.
      Tensor emb = random_tensor(rng, {b, d});
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j) emb(i, j) += bank.centers(labels[i], j);
      return center_loss(t.leaf(emb), bank, labels, form);
    });
  }
  add_fd("verification_loss", [](Tape& t, Rng& rng) {
    const std::size_t b = pick(rng, 1, 4), k = pick(rng, 2, 5), d = pick(rng, 1, 5);
    const CenterBank bank = random_bank(rng, k, d);
    const auto labels = random_labels(rng, b, k);
    const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return verification_loss(t.leaf(random_tensor(rng, {b, k}, 3.0)), t.leaf(random_tensor(rng, {b, d})), labels,
                             bank, alpha, CenterLossForm::squared_halved);
  });
  add_fd("weighted_total", [](Tape& t, Rng& rng) {
    const std::size_t tasks = pick(rng, 1, 4);
    std::vector<Var> losses;
    std::vector<double> weights;
    for (std::size_t i = 0; i < tasks; ++i) {
      losses.push_back(sum(t.leaf(random_tensor(rng, random_matrix_shape(rng)))));
      weights.push_back(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    }
    return weighted_total(losses, weights);
  });
  add_fd("weight_logits", [](Tape& t, Rng& rng) {
    const std::size_t tasks = pick(rng, 2, 4), width = pick(rng, 1, 6);
    return project(weight_logits(t.leaf(random_tensor(rng, {1, width})), t.leaf(random_tensor(rng, {tasks, width})),
                                 t.leaf(random_tensor(rng, {tasks}))),
                   rng);
  });
  add_fd("l4_loss", [](Tape& t, Rng& rng) {
    const std::size_t tasks = pick(rng, 2, 4), width = pick(rng, 1, 6);
    LossVector losses(tasks);
    for (double& l : losses) l = std::uniform_real_distribution<double>(0.05, 3.0)(rng);
    const Var w = softmax(weight_logits(t.constant(random_tensor(rng, {1, width})),
                                        t.leaf(random_tensor(rng, {tasks, width})), t.leaf(random_tensor(rng, {tasks}))));
    return l4_loss(w, losses);
  });
  add_fd("network", [](Tape& t, Rng& rng) {
    Architecture arch;
    arch.input_width = pick(rng, 2, 5);
    arch.trunk_widths = {pick(rng, 2, 5), pick(rng, 2, 5)};
    arch.branch_hidden = {pick(rng, 2, 4)};
    arch.bottleneck = pick(rng, 2, 4);
    arch.classes = {pick(rng, 2, 4)};
    arch.activation = Activation::tanh;  // smooth, so no kink lands near a probe
    const ModelParams params = init_model(arch, rng());
    ModelBinding model(t, params);
    const std::size_t batch = pick(rng, 1, 4);
    const std::size_t tasks[] = {0};
    const ForwardVars f = forward(model, t.constant(random_tensor(rng, {batch, arch.input_width})), tasks, {});
    return cross_entropy_loss(f.branches[0]->logits, random_labels(rng, batch, arch.classes[0]));
  });
  r.push_back({"grad_l4_full", 1e-12, closed_form(true)});
  r.push_back({"grad_total_loss", 1e-12, closed_form(false)});
  return r;
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.passed; });
}

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> names;
  for (const auto& r : registry()) names.push_back(r.op);
  return names;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  const auto checks = registry();
  for (std::size_t c = 0; c < checks.size(); ++c) {
    GradcheckEntry e;
    e.op = checks[c].op;
    e.tolerance = checks[c].tolerance > 0.0 ? checks[c].tolerance : options.tolerance;
    Rng rng = make_rng(options.seed, {c});
    for (std::size_t i = 0; i < options.instances; ++i) {
      e.max_rel_error = std::max(e.max_rel_error, checks[c].check(rng, options.fault_op, options.eps));
      ++e.instances;
    }
    e.passed = e.max_rel_error <= e.tolerance;
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::string format_gradcheck(const GradcheckReport& report) {
  std::string out = "op,instances,max_rel_error,tolerance,status\n";
  for (const auto& e : report.entries) {
    out += e.op + "," + std::to_string(e.instances) + "," + format_double(e.max_rel_error) + "," +
           format_double(e.tolerance) + "," + (e.passed ? "PASS" : "FAIL") + "\n";
  }
  return out;
}

}  // namespace dmtl
