#include <doctest.h>

#include <cmath>
#include <random>

#include "dmtl/errors.hpp"
#include "dmtl/losses.hpp"
#include "dmtl/network.hpp"
#include "dmtl/tape.hpp"
#include "helpers.hpp"

using namespace dmtl;
using testing::random_tensor;

namespace {

Architecture small_arch(std::size_t tasks = 3) {
  Architecture arch;
  arch.input_width = 5;
  arch.trunk_widths = {6, 4};
  arch.branch_hidden = {5};
  arch.bottleneck = 3;
  arch.classes.assign(tasks, 4);
  arch.activation = Activation::tanh;
  return arch;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("xavier_init") {
  CHECK(xavier_init(4, 7, 9) == xavier_init(4, 7, 9));
  CHECK(xavier_init(4, 7, 9) != xavier_init(4, 7, 10));
  const Tensor w = xavier_init(3, 3, 1);
  CHECK(w.shape() == Shape{3, 3});
  for (double v : w.values()) CHECK(std::abs(v) <= 1.0);
  CHECK_THROWS_AS(xavier_init(0, 3, 1), ArgumentError);
  CHECK_THROWS_AS(xavier_init(3, 0, 1), ArgumentError);

  // 100×1000 = 10⁵ draws; Var[U(−a,a)] = a²/3 = 2/(fan_in+fan_out).
  const Tensor big = xavier_init(100, 1000, 2);
  double sum = 0, sq = 0;
  for (double v : big.values()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(big.size());
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(2.0 / 1100.0).epsilon(0.05));
}

TEST_CASE("init_model layout and zero biases") {
  const ModelParams m = init_model(small_arch(), 4);
  CHECK(m.trunk.size() == 2);
  CHECK(m.num_tasks() == 3);
  CHECK(m.input_width() == 5);
  CHECK(m.z_width() == 4);
  for (const auto& [name, t] : m.named_tensors()) {
    if (name.find("bias") != std::string::npos) CHECK(*t == Tensor(t->shape(), 0.0));
  }
  CHECK_NOTHROW(validate(m));
  ModelParams broken = m;
  broken.branches[1].hidden[0].weight = Tensor(Shape{3, 5});
  CHECK_THROWS_AS(validate(broken), DimensionError);
}

TEST_CASE("identity trunk passes the input through") {
  Architecture arch = small_arch(1);
  arch.trunk_widths = {5};
  arch.activation = Activation::identity;
  ModelParams m = init_model(arch, 1);
  m.trunk[0].weight = Tensor::identity(5);
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(rng, {3, 5});
  CHECK(forward(m, x, all_tasks(m), {}).z == x);
}

TEST_CASE("forward shares z across branches") {
  const ModelParams m = init_model(small_arch(), 4);
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor(rng, {6, 5});
  const std::vector<std::size_t> both{0, 2};
  const ForwardResult r = forward(m, x, both, {});
  CHECK(r.logits[0].has_value());
  CHECK_FALSE(r.logits[1].has_value());
  CHECK(r.logits[2]->shape() == Shape{6, 4});
  CHECK(r.embeddings[2]->shape() == Shape{6, 3});
  // Each branch alone reproduces the joint result bit-for-bit.
  const std::vector<std::size_t> only0{0}, only2{2};
  CHECK(forward(m, x, only0, {}).logits[0] == r.logits[0]);
  CHECK(forward(m, x, only2, {}).logits[2] == r.logits[2]);
  CHECK(forward(m, x, only2, {}).z == r.z);

  CHECK_THROWS_AS(forward(m, random_tensor(rng, {2, 4}), both, {}), DimensionError);
  CHECK_THROWS(forward(m, x, std::vector<std::size_t>{}, {}));
}

TEST_CASE("dropout only in train mode") {
  Architecture arch = small_arch();
  arch.dropout_rate = 0.5;
  const ModelParams m = init_model(arch, 3);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {4, 5});
  const auto tasks = all_tasks(m);
  CHECK(forward(m, x, tasks, {false, 1}).logits == forward(m, x, tasks, {false, 2}).logits);
  CHECK(forward(m, x, tasks, {true, 1}).z == forward(m, x, tasks, {true, 1}).z);
  CHECK(forward(m, x, tasks, {true, 1}).z != forward(m, x, tasks, {true, 2}).z);

  const Tensor mask = dropout_mask({1000}, 0.25, 7, 0);
  for (double v : mask.values()) CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
}

TEST_CASE("dropout preserves the expectation") {
  Architecture arch = small_arch(1);
  arch.trunk_widths = {8};
  arch.dropout_rate = 0.5;
  const ModelParams m = init_model(arch, 5);
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(rng, {1, 5});
  const auto tasks = all_tasks(m);
  const Tensor expected = forward(m, x, tasks, {false, 0}).z;
  const int draws = 20000;
  std::vector<double> mean(expected.size(), 0.0);
  for (int s = 0; s < draws; ++s) {
    const Tensor z = forward(m, x, tasks, {true, static_cast<std::uint64_t>(s)}).z;
    for (std::size_t i = 0; i < z.size(); ++i) mean[i] += z[i] / draws;
  }
  // Each unit is 0 or 2·h with equal odds, so the standard error of the mean is |h|/√draws.
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(std::abs(mean[i] - expected[i]) <= 5.0 * std::abs(expected[i]) / std::sqrt(double(draws)) + 1e-15);
  }
}

TEST_CASE("gradient isolation between branches") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams m = init_model(small_arch(), static_cast<std::uint64_t>(trial));
    const Tensor x = random_tensor(rng, {4, 5});
    std::vector<std::size_t> labels{0, 1, 2, 3};
    for (std::size_t task = 0; task < 3; ++task) {
      Tape tape;
      ModelBinding model(tape, m);
      const std::vector<std::size_t> all{0, 1, 2};
      const ForwardVars fv = forward(model, tape.constant(x), all, {});
      const Gradients g = tape.backward(cross_entropy_loss(fv.branches[task]->logits, labels));
      const auto names = m.named_tensors();
      double trunk_norm = 0.0;
      for (std::size_t i = 0; i < names.size(); ++i) {
        const std::string& name = names[i].first;
        const Tensor& gi = g[model.vars()[i]];
        double norm = 0.0;
        for (double v : gi.values()) norm += v * v;
        if (name.rfind("trunk", 0) == 0) {
          trunk_norm += norm;
        } else if (name.rfind("branch" + std::to_string(task + 1) + ".", 0) != 0) {
          INFO(name);
          CHECK(norm == 0.0);
        }
      }
      CHECK(trunk_norm > 0.0);
    }
  }
}

TEST_CASE("activation names") {
  CHECK(parse_activation("relu") == Activation::relu);
  CHECK(parse_activation(to_string(Activation::tanh)) == Activation::tanh);
  CHECK_THROWS(parse_activation("sigmoid"));
}

}
