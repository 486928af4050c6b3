// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmtl/checkpoint.hpp"
#include "dmtl/config.hpp"
#include "dmtl/experiments.hpp"
#include "dmtl/gradcheck.hpp"
#include "dmtl/metrics.hpp"
#include "dmtl/optim.hpp"
#include "dmtl/tape.hpp"
#include "dmtl/taskweights.hpp"
#include "dmtl/trainer.hpp"
#include "oracles.hpp"

using namespace dmtl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and thresholds.
constexpr double kGradTolerance = 1e-5;
constexpr double kClosedFormTolerance = 1e-12;
constexpr double kGradRuntimeLimit = 30.0;
constexpr double kRatioTolerance = 1e-10;
constexpr int kOrderingTrials = 1000;
constexpr double kDirectionFraction = 0.95;
constexpr double kDirectionRuntimeLimit = 120.0;
constexpr double kAccuracyRuntimeLimit = 600.0;
constexpr int kSweepInteriorMin = 8;
constexpr int kMetricInstances = 50;
constexpr double kAucTolerance = 1e-12;
constexpr double kDegenerationTolerance = 1e-12;
constexpr double kNormTolerance = 1e-12;
constexpr int kSeeds = 10;
constexpr std::uint64_t kHeldOutSeedBase = 100;

int failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

void info(const std::string& text) {
  std::printf("INFO %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

TrainConfig load_repo_config(const std::string& name) {
  return load_config(fs::path(DMTL_SOURCE_DIR) / "configs" / name);
}

TrainConfig toy_config(std::uint64_t seed, SchedulerKind kind) {
  TrainConfig c = load_repo_config("toy_two_task.json");
  c.seed = seed;
  c.dataset.synthetic->seed = seed;
  c.scheduler.kind = kind;
  if (kind == SchedulerKind::static_weights) c.scheduler.static_weights = {1.0, 0.0};
  c.finalize();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::uint64_t theta_checksum(const ModelParams& m) {
  std::uint64_t h = 0;
  for (const auto& [name, t] : m.named_tensors()) h = h * 1099511628211ULL ^ checksum(*t);
  return h;
}

std::uint64_t psi_checksum(const WeightModuleState& w) { return checksum(w.psi) * 1099511628211ULL ^ checksum(w.bias); }

struct MeanSe {
  double mean;
  double se;
};

MeanSe paired(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const FoldSummary s = aggregate_folds(d);
  return {s.mean, s.stddev / std::sqrt(static_cast<double>(d.size()))};
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

void criterion1() {
  const auto t0 = Clock::now();
  const GradcheckReport r = run_gradcheck({.seed = 0, .instances = 100, .eps = 1e-5, .tolerance = kGradTolerance});
  const double elapsed = seconds_since(t0);
  double worst = 0.0, worst_closed = 0.0;
  bool closed_tight = true;
  for (const auto& e : r.entries) {
    if (e.op.rfind("grad_", 0) == 0) {
      worst_closed = std::max(worst_closed, e.max_rel_error);
      closed_tight = closed_tight && e.tolerance <= kClosedFormTolerance;
    } else {
      worst = std::max(worst, e.max_rel_error);
    }
  }
  report(1, "gradient suite", r.passed() && closed_tight && elapsed < kGradRuntimeLimit,
         fmt("%zu ops x 100 instances, max rel err %.2e, closed forms %.2e, %.1fs", r.entries.size(), worst,
             worst_closed, elapsed));
}

void criterion2() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> loss(0.2, 5.0), coord(-1.5, 1.5);
  const Scheduler paper{SchedulerKind::dynamic_l4, {}, GradientForm::paper};
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 1 + t % 6;
    Tensor z(Shape{d});
    for (double& v : z.values()) v = coord(rng);
    const double l1 = loss(rng), l2 = loss(rng);
    WeightModuleState zero = WeightModuleState::zeros(2, d, 1.0);
    zero.train_bias = t % 2 == 0;
    const Tensor w = scheduler_step(paper, z, zero, {l1, l2}).weights;
    const double closed = two_task_ratio(l1, l2, z, zero);
    worst = std::max(worst, std::abs(w[0] / w[1] - closed) / closed);
  }
  report(2, "closed-form two-task ratio", worst <= kRatioTolerance, fmt("100 draws, max rel err %.2e", worst));
}

void criterion3() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> loss(0.05, 10.0), coord(-2.0, 2.0);
  int full = 0, paper = 0, naive = 0;
  for (int t = 0; t < kOrderingTrials; ++t) {
    const std::size_t tasks = 2 + t % 4, d = 1 + t % 7;
    Tensor z(Shape{d});
    double zz = 0.0;
    for (double& v : z.values()) {
      v = coord(rng);
      zz += v * v;
    }
    if (zz == 0.0) z[0] = 1.0;
    LossVector l(tasks);
    for (double& v : l) v = loss(rng);
    const WeightModuleState zero = WeightModuleState::zeros(tasks, d, 0.1);
    auto agrees = [&](const Tensor& w, bool reversed) {
      for (std::size_t i = 0; i < tasks; ++i) {
        for (std::size_t j = 0; j < tasks; ++j) {
          if (i == j) continue;
          const bool heavier = reversed ? w[i] < w[j] : w[i] > w[j];
          if ((l[i] > l[j]) != heavier) return false;
        }
      }
      return true;
    };
    full += agrees(scheduler_step({SchedulerKind::dynamic_l4, {}, GradientForm::full}, z, zero, l).weights, false);
    paper += agrees(scheduler_step({SchedulerKind::dynamic_l4, {}, GradientForm::paper}, z, zero, l).weights, false);
    naive += agrees(scheduler_step({SchedulerKind::naive_dynamic, {}, GradientForm::full}, z, zero, l).weights, true);
  }
  report(3, "ordering property", full == kOrderingTrials && paper == kOrderingTrials && naive == kOrderingTrials,
         fmt("dynamic full %d/%d, dynamic paper %d/%d, naive reversed %d/%d", full, kOrderingTrials, paper,
             kOrderingTrials, naive, kOrderingTrials));
}

// Fraction of first-quarter iterations where the heavier weight sits on the
// larger-loss task (dynamic) or the smaller-loss task (naive). Equal weights
// count as a miss.
std::pair<std::size_t, std::size_t> direction_hits(const RunHistory& h, bool favour_hard) {
  const std::size_t quarter = std::max<std::size_t>(1, h.records.size() / 4);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < quarter; ++i) {
    const auto& r = h.records[i];
    if (r.weights[0] == r.weights[1] || r.losses[0] == r.losses[1]) continue;
    const bool first_heavier = r.weights[0] > r.weights[1];
    const bool first_harder = r.losses[0] > r.losses[1];
    hits += favour_hard ? first_heavier == first_harder : first_heavier != first_harder;
  }
  return {hits, quarter};
}

struct ToyRuns {
  std::vector<double> dynamic_acc, naive_acc, single_acc;
};

ToyRuns toy_runs(std::uint64_t seed_base, bool score_direction, double* direction_seconds) {
  ToyRuns out;
  std::size_t dyn_hits = 0, naive_hits = 0, total = 0;
  double dyn_min = 1.0, naive_min = 1.0;
  const auto t0 = Clock::now();
  for (int s = 0; s < kSeeds; ++s) {
    const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(s);
    const RunResult dyn = run_training(toy_config(seed, SchedulerKind::dynamic_l4));
    const RunResult naive = run_training(toy_config(seed, SchedulerKind::naive_dynamic));
    out.dynamic_acc.push_back(dyn.history.evals.back().accuracy[0]);
    out.naive_acc.push_back(naive.history.evals.back().accuracy[0]);
    const auto [dh, q] = direction_hits(dyn.history, true);
    const auto [nh, q2] = direction_hits(naive.history, false);
    dyn_hits += dh;
    naive_hits += nh;
    total += q;
    dyn_min = std::min(dyn_min, double(dh) / q);
    naive_min = std::min(naive_min, double(nh) / q2);
  }
  if (direction_seconds) *direction_seconds = seconds_since(t0);
  if (score_direction) {
    const double dyn_frac = double(dyn_hits) / total, naive_frac = double(naive_hits) / total;
    report(4, "weight direction on the two-task toy",
           dyn_frac >= kDirectionFraction && naive_frac >= kDirectionFraction &&
               *direction_seconds < kDirectionRuntimeLimit,
           fmt("first quarter over %d seeds: dynamic favours hard %.3f (worst seed %.3f), naive favours easy %.3f "
               "(worst seed %.3f), %.1fs",
               kSeeds, dyn_frac, dyn_min, naive_frac, naive_min, *direction_seconds));
  }
  for (int s = 0; s < kSeeds; ++s) {
    const RunResult single = run_training(toy_config(seed_base + s, SchedulerKind::static_weights));
    out.single_acc.push_back(single.history.evals.back().accuracy[0]);
  }
  return out;
}

void criterion4and5() {
  const auto t0 = Clock::now();
  double direction_seconds = 0.0;
  const ToyRuns runs = toy_runs(0, true, &direction_seconds);
  const double elapsed = seconds_since(t0);
  const MeanSe vs_naive = paired(runs.dynamic_acc, runs.naive_acc);
  const MeanSe vs_single = paired(runs.dynamic_acc, runs.single_acc);
  report(5, "hard-task accuracy ordering",
         vs_naive.mean > vs_naive.se && vs_single.mean > vs_single.se && elapsed < kAccuracyRuntimeLimit,
         fmt("seeds 0-9 mean acc dynamic %.4f naive %.4f single %.4f; dynamic-naive %+.4f (SE %.4f), "
             "dynamic-single %+.4f (SE %.4f), %.1fs",
             mean_of(runs.dynamic_acc), mean_of(runs.naive_acc), mean_of(runs.single_acc), vs_naive.mean,
             vs_naive.se, vs_single.mean, vs_single.se, elapsed));

  const ToyRuns held = toy_runs(kHeldOutSeedBase, false, nullptr);
  const MeanSe hn = paired(held.dynamic_acc, held.naive_acc);
  const MeanSe hs = paired(held.dynamic_acc, held.single_acc);
  info(fmt("criterion 5 on held-out seeds %llu-%llu (not scored): dynamic-naive %+.4f (SE %.4f), dynamic-single "
           "%+.4f (SE %.4f)",
           static_cast<unsigned long long>(kHeldOutSeedBase), static_cast<unsigned long long>(kHeldOutSeedBase + 9),
           hn.mean, hn.se, hs.mean, hs.se));
}

void criterion6() {
  const auto t0 = Clock::now();
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(i / 10.0);
  int interior = 0;
  std::vector<double> mean_by_weight(grid.size(), 0.0);
  for (int s = 0; s < kSeeds; ++s) {
    TrainConfig c = toy_config(static_cast<std::uint64_t>(s), SchedulerKind::static_weights);
    const auto rows = run_sweep(c, 0, grid);
    double best_interior = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      mean_by_weight[i] += rows[i].accuracy[0] / kSeeds;
      if (rows[i].weight < 1.0) best_interior = std::max(best_interior, rows[i].accuracy[0]);
    }
    interior += best_interior > rows.back().accuracy[0];
  }
  const auto best = std::max_element(mean_by_weight.begin(), mean_by_weight.end()) - mean_by_weight.begin();
  std::string curve;
  for (std::size_t i = 0; i < grid.size(); ++i) curve += fmt(" w=%.1f:%.4f", grid[i], mean_by_weight[i]);
  info("criterion 6 mean hard-task accuracy by weight:" + curve);
  report(6, "static-weight sweep has an interior optimum", interior >= kSweepInteriorMin,
         fmt("%d/%d seeds; mean accuracy peaks at w=%.1f (%.4f) vs %.4f at w=1.0, %.1fs", interior, kSeeds,
             grid[best], mean_by_weight[best], mean_by_weight.back(), seconds_since(t0)));
}

void criterion7() {
  std::mt19937_64 rng(7);
  int roc_ok = 0, val_ok = 0, auc_ok = 0, rank_ok = 0;
  double worst_auc = 0.0;
  for (int t = 0; t < kMetricInstances; ++t) {
    const auto inst = oracle::random_scores(rng, 2 + rng() % 199);
    const RocCurve curve = roc_curve(inst.scores, inst.same());
    roc_ok += curve.points == oracle::roc(inst.scores, inst.same()).points;
    bool val = true;
    for (double far : {0.001, 0.01, 0.05, 0.1, 0.3}) {
      val = val && val_at_far(curve, far) == oracle::val_at_far(inst.scores, inst.same(), far);
    }
    val_ok += val;
    const double err = std::abs(auc(curve) - oracle::mann_whitney(inst.scores, inst.same()));
    worst_auc = std::max(worst_auc, err);
    auc_ok += err <= kAucTolerance;

    const std::size_t probes = 1 + rng() % 100, gallery = 10 + rng() % 100, d = 2 + rng() % 4;
    const Tensor p = oracle::grid_embeddings(rng, probes, d), g = oracle::grid_embeddings(rng, gallery, d);
    std::vector<std::size_t> pl(probes), gl(gallery);
    for (auto& l : pl) l = rng() % 10;
    for (auto& l : gl) l = rng() % 10;
    bool rank = true;
    for (std::size_t k : {1, 5, 10}) {
      rank = rank && rank_k_identification(p, pl, g, gl, k) == oracle::rank_k(p, pl, g, gl, k, Similarity::cosine);
    }
    rank_ok += rank;
  }
  const int n = kMetricInstances;
  report(7, "metric oracles", roc_ok == n && val_ok == n && auc_ok == n && rank_ok == n,
         fmt("roc %d/%d, val_at_far %d/%d, auc %d/%d (max diff %.1e), rank-k %d/%d", roc_ok, n, val_ok, n, auc_ok, n,
             worst_auc, rank_ok, n));
}

void criterion8() {
  TrainConfig base = load_repo_config("three_task.json");
  double worst = 0.0;
  for (std::size_t task = 0; task < base.num_tasks(); ++task) {
    TrainConfig c = base;
    c.scheduler.kind = SchedulerKind::static_weights;
    c.scheduler.static_weights.assign(c.num_tasks(), 0.0);
    c.scheduler.static_weights[task] = 1.0;
    c.finalize();
    const DataSplits data = load_data(c);
    TrainingState state = init_training(c, data.train);
    // A few steps first so the check runs on a trained, non-symmetric state.
    for (std::size_t it = 0; it < 5; ++it) train_step(state, sample_batch(data.train, c, it), c, it);
    const TaskBatch batch = sample_batch(data.train, c, 5);
    const StepEvaluation step = evaluate_step(state, batch, c, 5);

    Tape tape;
    ModelBinding model(tape, state.model);
    const std::size_t only[] = {task};
    const ForwardVars fv = forward(model, tape.constant(batch.x), only, {});
    std::vector<std::size_t> labels;
    for (auto r : batch.rows[task]) labels.push_back(batch.labels[r]);
    const Var logits = select_rows(fv.branches[task]->logits, batch.rows[task]);
    const Var loss = c.tasks[task].kind == TaskKind::verification
                         ? verification_loss(logits, select_rows(fv.branches[task]->embedding, batch.rows[task]),
                                             labels, *state.banks[task], c.losses.alpha, c.losses.center_form)
                         : cross_entropy_loss(logits, labels);
    const Gradients g = tape.backward(loss);
    for (std::size_t i = 0; i < step.theta_grads.size(); ++i) {
      const Tensor& ref = g[model.vars()[i]];
      for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::abs(step.theta_grads[i][k] - ref[k]));
    }
  }
  report(8, "one-hot static weights degenerate to single-task gradients", worst <= kDegenerationTolerance,
         fmt("3 tasks, max abs gradient difference %.2e", worst));
}

void criterion9() {
  const TrainConfig c = load_repo_config("three_task.json");
  const DataSplits data = load_data(c);
  TrainingState state = init_training(c, data.train);
  const Scheduler scheduler{c.scheduler.kind, c.scheduler.static_weights, c.scheduler.gradient};
  std::size_t weights_ok = 0, psi_kept = 0, theta_kept = 0, split_faithful = 0;
  double worst_sum = 0.0;
  const auto t0 = Clock::now();
  for (std::size_t it = 0; it < c.iterations; ++it) {
    const TaskBatch batch = sample_batch(data.train, c, it);
    const std::uint64_t theta0 = theta_checksum(state.model), psi0 = psi_checksum(state.weights);
    const StepEvaluation step = evaluate_step(state, batch, c, it);

    // Θ update alone.
    TrainingState theta_only = state;
    auto named = theta_only.model.named_tensors();
    for (std::size_t i = 0; i < named.size(); ++i) {
      rmsprop_step(*named[i].second, step.theta_grads[i], theta_only.optim.slots[i],
                   lr_schedule(it, c.optimizer), c.optimizer);
    }
    psi_kept += psi_checksum(theta_only.weights) == psi0;

    // Ψ update alone.
    TrainingState psi_only = state;
    WeightModuleState w = psi_only.weights;
    OptimizerConfig psi_sched = c.optimizer;
    psi_sched.base_lr = c.scheduler.lr.value_or(c.optimizer.base_lr);
    w.learning_rate = lr_schedule(it, psi_sched);
    psi_only.weights = scheduler_step(scheduler, step.z_mean, w, step.losses).state;
    theta_kept += theta_checksum(psi_only.model) == theta0;

    const IterationRecord rec = train_step(state, batch, c, it);
    split_faithful += theta_checksum(state.model) == theta_checksum(theta_only.model) &&
                      psi_checksum(state.weights) == psi_checksum(psi_only.weights);
    const double sum = std::accumulate(rec.weights.begin(), rec.weights.end(), 0.0);
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    weights_ok += std::abs(sum - 1.0) <= kNormTolerance;
  }
  const std::size_t n = c.iterations;
  report(9, "normalization and parameter isolation",
         n == 2000 && weights_ok == n && psi_kept == n && theta_kept == n && split_faithful == n,
         fmt("%zu iterations: weights sum to 1 in %zu (max dev %.1e); psi kept by theta step %zu, theta kept by psi "
             "step %zu, full step equals the two halves %zu, %.1fs",
             n, weights_ok, worst_sum, psi_kept, theta_kept, split_faithful, seconds_since(t0)));
}

void criterion10() {
  const TrainConfig c = load_repo_config("three_task.json");
  const fs::path root = fs::temp_directory_path() / "dmtl_acceptance_determinism";
  fs::remove_all(root);
  run_training(c, {root / "a", false, {}});
  run_training(c, {root / "b", false, {}});
  std::size_t compared = 0, identical = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    const auto ext = name.extension();
    if (ext != ".csv" && ext != ".bin") continue;
    ++compared;
    identical += fs::exists(root / "b" / name) && slurp(entry.path()) == slurp(root / "b" / name);
  }
  fs::remove_all(root);
  report(10, "determinism", compared >= 5 && identical == compared,
         fmt("%zu/%zu CSV and checkpoint files byte-identical across two runs", identical, compared));
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  criterion1();
  criterion2();
  criterion3();
  criterion4and5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
