#include "dmtl/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <map>

#include "dmtl/errors.hpp"
#include "dmtl/metrics.hpp"
#include "dmtl/random.hpp"
#include "dmtl/text.hpp"

namespace dmtl {

namespace {

constexpr std::uint64_t kBatchStream = 7;
constexpr std::uint64_t kDropoutStream = 5;
constexpr std::uint64_t kInitStream = 3;

Scheduler make_scheduler(const TrainConfig& config) {
  return Scheduler{config.scheduler.kind, config.scheduler.static_weights, config.scheduler.gradient};
}

double weight_module_lr(const TrainConfig& config, std::size_t iteration) {
  OptimizerConfig sched = config.optimizer;
  if (config.scheduler.lr) sched.base_lr = *config.scheduler.lr;
  return lr_schedule(iteration, sched);
}

std::size_t class_count(const DataSplits& data) {
  return std::max(data.train.num_classes(), data.test.num_classes());
}

}  // namespace

DataSplits load_data(const TrainConfig& config) {
  DataSplits splits;
  if (config.dataset.synthetic) {
    const ModalitySpec& spec = *config.dataset.synthetic;
    splits.train = generate(spec, 0);
    ModalitySpec test_spec = spec;
    test_spec.a.samples_per_class = config.dataset.test_samples_per_class;
    test_spec.b.samples_per_class = config.dataset.test_samples_per_class;
    splits.test = generate(test_spec, 1);
  } else if (config.dataset.csv) {
    splits.train = load_csv(config.dataset.csv->train, config.dataset.csv->schema);
    splits.test = load_csv(config.dataset.csv->test, config.dataset.csv->schema);
  } else {
    throw ConfigError("dataset", "dataset: a synthetic or csv dataset is required");
  }
  if (splits.train.size() == 0) throw ConfigError("dataset", "dataset: training split is empty");
  return splits;
}

std::vector<std::size_t> task_rows(const Dataset& data, const TaskSpec& task) {
  switch (task.modality) {
    case ModalitySelection::A: return data.indices_of(Modality::A);
    case ModalitySelection::B: return data.indices_of(Modality::B);
    case ModalitySelection::both: break;
  }
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

TrainingState init_training(const TrainConfig& config, const Dataset& train) {
  const std::size_t classes = train.num_classes();
  Architecture arch;
  arch.input_width = train.dim;
  arch.trunk_widths = config.model.trunk_widths;
  arch.branch_hidden = config.model.branch_hidden;
  arch.bottleneck = config.model.bottleneck;
  arch.classes.assign(config.num_tasks(), classes);
  arch.activation = config.model.activation;
  arch.dropout_rate = config.model.dropout_rate;

  TrainingState state;
  state.model = init_model(arch, derive_seed(config.seed, {kInitStream}));
  state.weights = WeightModuleState::zeros(config.num_tasks(), state.model.z_width(), weight_module_lr(config, 0));
  state.weights.train_bias = config.scheduler.train_bias;
  state.banks.resize(config.num_tasks());
  for (std::size_t t = 0; t < config.num_tasks(); ++t) {
    if (config.tasks[t].kind == TaskKind::verification) {
      state.banks[t] = CenterBank::zeros(classes, config.model.bottleneck, config.losses.beta);
    }
  }
  state.optim = OptimState::for_model(state.model);
  return state;
}

TaskBatch sample_batch(const Dataset& train, const TrainConfig& config, std::size_t iteration) {
  const auto a_rows = train.indices_of(Modality::A);
  const auto b_rows = train.indices_of(Modality::B);
  Rng rng = make_rng(config.seed, {kBatchStream, iteration});
  std::vector<std::size_t> picked;
  picked.reserve(config.batch_size);
  const std::size_t half = config.batch_size / 2;
  auto draw = [&](const std::vector<std::size_t>& pool, std::size_t n) {
    if (pool.empty()) return;
    std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
    for (std::size_t i = 0; i < n; ++i) picked.push_back(pool[dist(rng)]);
  };
  if (a_rows.empty() || b_rows.empty()) {
    draw(a_rows.empty() ? b_rows : a_rows, config.batch_size);
  } else {
    draw(a_rows, half);
    draw(b_rows, config.batch_size - half);
  }

  TaskBatch batch;
  batch.x = train.rows(picked);
  batch.labels = train.labels_of(picked);
  for (const auto& task : config.tasks) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < picked.size(); ++r) {
      const Modality m = train.modality[picked[r]];
      if (task.modality == ModalitySelection::both || (task.modality == ModalitySelection::A && m == Modality::A) ||
          (task.modality == ModalitySelection::B && m == Modality::B)) {
        rows.push_back(r);
      }
    }
    if (rows.empty()) {
      throw ConfigError("tasks", "task '" + task.name + "' has no rows of its modality in the training data");
    }
    batch.rows.push_back(std::move(rows));
  }
  return batch;
}

StepEvaluation evaluate_step(const TrainingState& state, const TaskBatch& batch, const TrainConfig& config,
                             std::size_t iteration) {
  const std::size_t tasks = config.num_tasks();
  Tape tape;
  ModelBinding model(tape, state.model);
  const ForwardOptions opts{state.model.dropout_rate > 0.0, derive_seed(config.seed, {kDropoutStream, iteration})};
  Var z = forward_trunk(model, tape.constant(batch.x), opts);

  StepEvaluation out;
  out.losses.resize(tasks);
  out.embeddings.resize(tasks);
  std::vector<Var> loss_vars;
  for (std::size_t t = 0; t < tasks; ++t) {
    const auto& rows = batch.rows.at(t);
    std::vector<std::size_t> labels;
    labels.reserve(rows.size());
    for (auto r : rows) labels.push_back(batch.labels[r]);
    BranchVars branch = forward_branch(model, t, select_rows(z, rows), opts);
    Var loss;
    if (config.tasks[t].kind == TaskKind::verification) {
      loss = verification_loss(branch.logits, branch.embedding, labels, *state.banks[t], config.losses.alpha,
                               config.losses.center_form);
      out.embeddings[t] = tape.value(branch.embedding);
    } else {
      loss = cross_entropy_loss(branch.logits, labels);
    }
    const double value = tape.value(loss).item();
    if (!std::isfinite(value)) {
      throw NumericError("task " + std::to_string(t + 1) + " ('" + config.tasks[t].name +
                         "') loss is not finite at iteration " + std::to_string(iteration));
    }
    out.losses[t] = value;
    loss_vars.push_back(loss);
  }

  out.z_mean = mean_rows(tape.value(z));
  if (config.scheduler.kind == SchedulerKind::static_weights) {
    out.weights = Tensor::vector(config.scheduler.static_weights);
  } else {
    out.weights = task_weights(out.z_mean, state.weights);
  }

  std::vector<double> coeff(tasks, 1.0);
  if (config.theta_update == ThetaUpdate::weighted) coeff = out.weights.values();
  const Gradients grads = tape.backward(weighted_total(loss_vars, coeff));
  for (Var v : model.vars()) out.theta_grads.push_back(grads[v]);
  return out;
}

IterationRecord train_step(TrainingState& state, const TaskBatch& batch, const TrainConfig& config,
                           std::size_t iteration) {
  StepEvaluation step = evaluate_step(state, batch, config, iteration);
  const double lr = lr_schedule(iteration, config.optimizer);

  auto named = state.model.named_tensors();
  for (std::size_t i = 0; i < named.size(); ++i) {
    rmsprop_step(*named[i].second, step.theta_grads[i], state.optim.slots[i], lr, config.optimizer);
  }

  WeightModuleState psi = state.weights;
  psi.learning_rate = weight_module_lr(config, iteration);
  state.weights = scheduler_step(make_scheduler(config), step.z_mean, psi, step.losses).state;

  for (std::size_t t = 0; t < config.num_tasks(); ++t) {
    if (!state.banks[t]) continue;
    std::vector<std::size_t> labels;
    for (auto r : batch.rows[t]) labels.push_back(batch.labels[r]);
    state.banks[t] = update_centers(*state.banks[t], *step.embeddings[t], labels);
  }
  state.iteration = iteration + 1;

  IterationRecord rec;
  rec.iteration = iteration;
  rec.lr = lr;
  rec.weights = step.weights.values();
  rec.losses = step.losses;
  rec.l4 = l4_loss(rec.weights, rec.losses);
  rec.total = weighted_total(rec.losses, rec.weights);
  return rec;
}

double task_accuracy(const ModelParams& model, const Dataset& data, const TaskSpec& task, std::size_t task_index) {
  const auto rows = task_rows(data, task);
  if (rows.empty()) throw ArgumentError("task_accuracy: no evaluation rows for task '" + task.name + "'");
  const std::size_t tasks[] = {task_index};
  const ForwardResult out = forward(model, data.rows(rows), tasks, ForwardOptions{});
  return accuracy(argmax_rows(*out.logits[task_index]), data.labels_of(rows));
}

std::string csv_header(std::size_t tasks) {
  std::string h = "iter,lr";
  for (std::size_t i = 1; i <= tasks; ++i) h += ",w" + std::to_string(i);
  for (std::size_t i = 1; i <= tasks; ++i) h += ",L" + std::to_string(i);
  return h + ",L4,total";
}

std::string csv_row(const IterationRecord& r) {
  std::string s = std::to_string(r.iteration) + "," + format_double(r.lr);
  for (double w : r.weights) s += "," + format_double(w);
  for (double l : r.losses) s += "," + format_double(l);
  return s + "," + format_double(r.l4) + "," + format_double(r.total);
}

NamedTensors pack_state(const TrainingState& state) {
  NamedTensors out;
  const auto named = state.model.named_tensors();
  for (const auto& [name, t] : named) out.emplace_back(name, *t);
  out.emplace_back("psi", state.weights.psi);
  out.emplace_back("psi_bias", state.weights.bias);
  for (std::size_t t = 0; t < state.banks.size(); ++t) {
    if (state.banks[t]) out.emplace_back("centers" + std::to_string(t + 1), state.banks[t]->centers);
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    out.emplace_back("opt.acc." + named[i].first, state.optim.slots[i].accumulator);
    out.emplace_back("opt.mom." + named[i].first, state.optim.slots[i].momentum);
  }
  out.emplace_back("meta.iteration", Tensor::scalar(static_cast<double>(state.iteration)));
  out.emplace_back("meta.activation", Tensor::scalar(static_cast<double>(state.model.activation)));
  out.emplace_back("meta.dropout", Tensor::scalar(state.model.dropout_rate));
  out.emplace_back("meta.psi_lr", Tensor::scalar(state.weights.learning_rate));
  out.emplace_back("meta.psi_train_bias", Tensor::scalar(state.weights.train_bias ? 1.0 : 0.0));
  double rate = 0.5;
  for (const auto& b : state.banks) {
    if (b) rate = b->update_rate;
  }
  out.emplace_back("meta.center_rate", Tensor::scalar(rate));
  return out;
}

TrainingState unpack_state(const NamedTensors& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  auto get = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    return *it->second;
  };
  auto has = [&](const std::string& name) { return by_name.count(name) > 0; };

  TrainingState s;
  for (std::size_t l = 0; has("trunk." + std::to_string(l) + ".weight"); ++l) {
    const std::string p = "trunk." + std::to_string(l);
    s.model.trunk.push_back(DenseLayer{get(p + ".weight"), get(p + ".bias")});
  }
  for (std::size_t t = 1; has("branch" + std::to_string(t) + ".bottleneck.weight"); ++t) {
    const std::string p = "branch" + std::to_string(t);
    Branch br;
    for (std::size_t l = 0; has(p + ".hidden" + std::to_string(l) + ".weight"); ++l) {
      const std::string h = p + ".hidden" + std::to_string(l);
      br.hidden.push_back(DenseLayer{get(h + ".weight"), get(h + ".bias")});
    }
    br.bottleneck = DenseLayer{get(p + ".bottleneck.weight"), get(p + ".bottleneck.bias")};
    br.classifier = DenseLayer{get(p + ".classifier.weight"), get(p + ".classifier.bias")};
    s.model.branches.push_back(std::move(br));
  }
  if (s.model.branches.empty()) throw CheckpointError("checkpoint holds no task branches");
  const auto activation = static_cast<int>(get("meta.activation").item());
  if (activation < 0 || activation > 2) throw CheckpointError("checkpoint has an unknown activation code");
  s.model.activation = static_cast<Activation>(activation);
  s.model.dropout_rate = get("meta.dropout").item();
  try {
    validate(s.model);
  } catch (const DimensionError& e) {
    throw CheckpointError(std::string("checkpoint layers do not chain: ") + e.what());
  }

  s.weights.psi = get("psi");
  s.weights.bias = get("psi_bias");
  s.weights.learning_rate = get("meta.psi_lr").item();
  s.weights.train_bias = get("meta.psi_train_bias").item() != 0.0;
  if (s.weights.num_tasks() != s.model.num_tasks() || s.weights.z_width() != s.model.z_width()) {
    throw CheckpointError("checkpoint weight module does not match the model");
  }
  const double rate = get("meta.center_rate").item();
  s.banks.resize(s.model.num_tasks());
  for (std::size_t t = 0; t < s.banks.size(); ++t) {
    const std::string name = "centers" + std::to_string(t + 1);
    if (has(name)) s.banks[t] = CenterBank{get(name), rate};
  }
  for (const auto& [name, t] : s.model.named_tensors()) {
    s.optim.slots.push_back(ParamState{get("opt.acc." + name), get("opt.mom." + name)});
  }
  s.iteration = static_cast<std::size_t>(get("meta.iteration").item());
  return s;
}

RunResult run_training(const TrainConfig& config, const RunOptions& options) {
  TrainConfig cfg = config;
  cfg.finalize();

  std::ofstream log;
  if (options.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*options.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + options.out_dir->string() + ": " + ec.message());
    log.open(*options.out_dir / "log.csv", std::ios::binary);
    if (!log) throw IoError("cannot write " + (*options.out_dir / "log.csv").string());
    std::ofstream snapshot(*options.out_dir / "config.json", std::ios::binary);
    if (!snapshot) throw IoError("cannot write " + (*options.out_dir / "config.json").string());
    snapshot << serialize_config(cfg);
    log << csv_header(cfg.num_tasks()) << '\n';
  }

  RunResult result;
  result.data = load_data(cfg);
  if (class_count(result.data) > result.data.train.num_classes()) {
    throw ConfigError("dataset", "dataset: test split has labels never seen in training");
  }
  result.state = init_training(cfg, result.data.train);
  TrainingState& state = result.state;

  auto evaluate = [&](std::size_t iteration) {
    EvalRecord e;
    e.iteration = iteration;
    for (std::size_t t = 0; t < cfg.num_tasks(); ++t) {
      e.accuracy.push_back(task_accuracy(state.model, result.data.test, cfg.tasks[t], t));
    }
    result.history.evals.push_back(std::move(e));
  };

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const TaskBatch batch = sample_batch(result.data.train, cfg, it);
    IterationRecord rec = train_step(state, batch, cfg, it);
    if (log.is_open()) log << csv_row(rec) << '\n';
    if (options.verbose && cfg.output.log_every > 0 && (it + 1) % cfg.output.log_every == 0) {
      std::string ws;
      for (double w : rec.weights) ws += format_double(w) + " ";
      spdlog::info("iter {} lr {} total {} weights {}", it, rec.lr, rec.total, ws);
    }
    if (options.observer) options.observer(state, rec);
    result.history.records.push_back(std::move(rec));
    if (cfg.output.eval_every > 0 && (it + 1) % cfg.output.eval_every == 0 && it + 1 < cfg.iterations) {
      evaluate(it + 1);
    }
    if (options.out_dir && cfg.output.checkpoint_every > 0 && (it + 1) % cfg.output.checkpoint_every == 0) {
      write_checkpoint(*options.out_dir / ("checkpoint_" + std::to_string(it + 1) + ".bin"), pack_state(state));
    }
  }
  evaluate(cfg.iterations);

  if (options.out_dir) {
    write_checkpoint(*options.out_dir / "checkpoint_final.bin", pack_state(state));
    std::ofstream ev(*options.out_dir / "eval.csv", std::ios::binary);
    ev << "iter";
    for (std::size_t t = 1; t <= cfg.num_tasks(); ++t) ev << ",acc" << t;
    ev << '\n';
    for (const auto& e : result.history.evals) {
      ev << e.iteration;
      for (double a : e.accuracy) ev << ',' << format_double(a);
      ev << '\n';
    }
  }
  return result;
}

}  // namespace dmtl
