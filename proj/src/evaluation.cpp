#include "dmtl/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>

#include "dmtl/errors.hpp"
#include "dmtl/text.hpp"

namespace dmtl {

namespace {

std::size_t embedding_branch(const std::vector<TaskSpec>& tasks, const EvalOptions& options) {
  if (options.embedding_task) {
    if (*options.embedding_task >= tasks.size()) {
      throw ArgumentError("evaluate: embedding task " + std::to_string(*options.embedding_task) + " out of range");
    }
    return *options.embedding_task;
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].kind == TaskKind::verification) return t;
  }
  return 0;
}

Tensor embed(const ModelParams& model, const Dataset& data, std::span<const std::size_t> rows, std::size_t task) {
  const std::size_t tasks[] = {task};
  return *forward(model, data.rows(rows), tasks, ForwardOptions{}).embeddings[task];
}

MetricSummary summarize(std::string name, std::vector<double> per_fold) {
  MetricSummary m;
  m.name = std::move(name);
  m.summary = aggregate_folds(per_fold);
  m.per_fold = std::move(per_fold);
  return m;
}

EvalReport verification(const ModelParams& model, const Dataset& data, const std::vector<TaskSpec>& tasks,
                        const EvalOptions& options) {
  const std::size_t branch = embedding_branch(tasks, options);
  const auto pairs = make_pairs(data, options.pairs, options.seed);
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Tensor emb = embed(model, data, all, branch);

  std::vector<double> scores;
  std::vector<std::size_t> strata;
  for (const auto& p : pairs) {
    scores.push_back(similarity(emb.row(p.first), emb.row(p.second), options.similarity));
    strata.push_back(p.same ? 1 : 0);
  }
  const auto folds = stratified_folds(strata, options.folds, options.seed);
  std::vector<double> val_01, val_1, area;
  for (const auto& fold : folds) {
    std::vector<double> s;
    // std::vector<bool> is not contiguous, so flags go through a plain array.
    auto same = std::make_unique<bool[]>(fold.size());
    for (std::size_t j = 0; j < fold.size(); ++j) {
      s.push_back(scores[fold[j]]);
      same[j] = pairs[fold[j]].same;
    }
    const RocCurve curve = roc_curve(s, std::span<const bool>(same.get(), fold.size()));
    val_01.push_back(val_at_far(curve, 0.001));
    val_1.push_back(val_at_far(curve, 0.01));
    area.push_back(auc(curve));
  }
  EvalReport r;
  r.protocol = Protocol::verification;
  r.metrics.push_back(summarize("VAL@FAR=0.1%", std::move(val_01)));
  r.metrics.push_back(summarize("VAL@FAR=1%", std::move(val_1)));
  r.metrics.push_back(summarize("AUC", std::move(area)));
  return r;
}

EvalReport cross_modal_identification(const ModelParams& model, const Dataset& data,
                                      const std::vector<TaskSpec>& tasks, Protocol protocol,
                                      const EvalOptions& options) {
  const std::size_t branch = embedding_branch(tasks, options);
  const Modality probe_side = protocol == Protocol::c2p ? Modality::A : Modality::B;
  const Modality gallery_side = probe_side == Modality::A ? Modality::B : Modality::A;
  const auto probes = data.indices_of(probe_side);
  const auto gallery = data.indices_of(gallery_side);
  if (gallery.size() < 10) {
    throw ArgumentError("evaluate: Rank-10 needs at least 10 gallery samples, have " + std::to_string(gallery.size()));
  }
  const Tensor probe_emb = embed(model, data, probes, branch);
  const Tensor gallery_emb = embed(model, data, gallery, branch);
  const auto gallery_labels = data.labels_of(gallery);
  const auto probe_labels = data.labels_of(probes);

  const auto folds = stratified_folds(probe_labels, options.folds, options.seed);
  std::vector<double> rank1, rank10;
  for (const auto& fold : folds) {
    std::vector<double> rows;
    std::vector<std::size_t> labels;
    for (auto i : fold) {
      const auto r = probe_emb.row(i);
      rows.insert(rows.end(), r.begin(), r.end());
      labels.push_back(probe_labels[i]);
    }
    const Tensor fold_emb = Tensor::matrix(fold.size(), probe_emb.cols(), std::move(rows));
    rank1.push_back(rank_k_identification(fold_emb, labels, gallery_emb, gallery_labels, 1, options.similarity));
    rank10.push_back(rank_k_identification(fold_emb, labels, gallery_emb, gallery_labels, 10, options.similarity));
  }
  EvalReport r;
  r.protocol = protocol;
  r.metrics.push_back(summarize("Rank-1", std::move(rank1)));
  r.metrics.push_back(summarize("Rank-10", std::move(rank10)));
  return r;
}

EvalReport identification(const ModelParams& model, const Dataset& data, const std::vector<TaskSpec>& tasks,
                          const EvalOptions& options) {
  EvalReport r;
  r.protocol = Protocol::identification;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].kind != TaskKind::identification) continue;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const bool in = tasks[t].modality == ModalitySelection::both ||
                      (tasks[t].modality == ModalitySelection::A) == (data.modality[i] == Modality::A);
      if (in) rows.push_back(i);
    }
    if (rows.empty()) throw ArgumentError("evaluate: task '" + tasks[t].name + "' has no rows in the dataset");
    const std::size_t branch[] = {t};
    const auto logits = *forward(model, data.rows(rows), branch, ForwardOptions{}).logits[t];
    const auto predicted = argmax_rows(logits);
    const auto labels = data.labels_of(rows);
    const auto folds = stratified_folds(labels, options.folds, options.seed);
    std::vector<double> acc;
    for (const auto& fold : folds) {
      std::vector<std::size_t> p, l;
      for (auto i : fold) {
        p.push_back(predicted[i]);
        l.push_back(labels[i]);
      }
      acc.push_back(accuracy(p, l));
    }
    r.metrics.push_back(summarize(tasks[t].name, std::move(acc)));
  }
  if (r.metrics.empty()) throw ArgumentError("evaluate: no identification tasks configured");
  return r;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::verification: return "verification";
    case Protocol::c2p: return "c2p";
    case Protocol::p2c: return "p2c";
    case Protocol::identification: return "identification";
  }
  return "?";
}

Protocol parse_protocol(std::string_view name) {
  for (auto p : {Protocol::verification, Protocol::c2p, Protocol::p2c, Protocol::identification}) {
    if (to_string(p) == name) return p;
  }
  throw ArgumentError("unknown protocol '" + std::string(name) + "' (verification|c2p|p2c|identification)");
}

void check_compatible(const ModelParams& model, const Dataset& data, const std::vector<TaskSpec>& tasks) {
  if (model.input_width() != data.dim) {
    throw CheckpointError("checkpoint expects input width " + std::to_string(model.input_width()) +
                          " but the dataset has " + std::to_string(data.dim) + " features");
  }
  if (model.num_tasks() != tasks.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(model.num_tasks()) + " task branches but " +
                          std::to_string(tasks.size()) + " tasks are configured");
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const std::size_t classes = model.branches[t].classifier.weight.cols();
    if (data.num_classes() > classes) {
      throw CheckpointError("checkpoint branch " + std::to_string(t + 1) + " has " + std::to_string(classes) +
                            " classes but the dataset uses " + std::to_string(data.num_classes()));
    }
  }
}

EvalReport evaluate(const ModelParams& model, const Dataset& data, const std::vector<TaskSpec>& tasks,
                    Protocol protocol, const EvalOptions& options) {
  check_compatible(model, data, tasks);
  switch (protocol) {
    case Protocol::verification: return verification(model, data, tasks, options);
    case Protocol::c2p:
    case Protocol::p2c: return cross_modal_identification(model, data, tasks, protocol, options);
    case Protocol::identification: return identification(model, data, tasks, options);
  }
  throw ArgumentError("evaluate: unknown protocol");
}

std::string format_report(const EvalReport& report) {
  std::string out = "metric,mean,std,formatted\n";
  for (const auto& m : report.metrics) {
    out += m.name + "," + format_double(m.summary.mean) + "," + format_double(m.summary.stddev) + "," +
           percent(m.summary.mean) + "±" + percent(m.summary.stddev) + "\n";
  }
  return out;
}

}  // namespace dmtl
