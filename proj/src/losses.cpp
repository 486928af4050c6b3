#include "dmtl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dmtl/errors.hpp"

namespace dmtl {

std::string_view to_string(CenterLossForm f) {
  return f == CenterLossForm::squared_halved ? "squared_halved" : "literal_norm";
}

CenterLossForm parse_center_form(std::string_view name) {
  if (name == "squared_halved") return CenterLossForm::squared_halved;
  if (name == "literal_norm") return CenterLossForm::literal_norm;
  throw ArgumentError("unknown center-loss form '" + std::string(name) + "'");
}

CenterBank CenterBank::zeros(std::size_t classes, std::size_t width, double update_rate) {
  if (!(update_rate > 0.0 && update_rate <= 1.0)) throw ArgumentError("center update rate must lie in (0,1]");
  return CenterBank{Tensor({classes, width}, 0.0), update_rate};
}

namespace {

void check_label(std::size_t label, std::size_t classes, std::string_view what) {
  if (label >= classes) {
    throw ArgumentError(std::string(what) + ": label " + std::to_string(label) + " out of range for " +
                        std::to_string(classes) + " classes");
  }
}

void check_embedding_width(std::size_t width, const CenterBank& bank) {
  if (width != bank.width()) {
    throw DimensionError("center loss: embedding width " + std::to_string(width) + " vs center width " +
                         std::to_string(bank.width()));
  }
}

}  // namespace

double cross_entropy(const Tensor& logits, std::size_t label) {
  check_label(label, logits.size(), "cross_entropy");
  const auto v = logits.values();
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return std::max(0.0, mx + std::log(s) - v[label]);
}

double center_loss(const Tensor& embedding, const CenterBank& bank, std::size_t label, CenterLossForm form) {
  check_embedding_width(embedding.size(), bank);
  check_label(label, bank.num_classes(), "center_loss");
  const auto c = bank.centers.row(label);
  double sq = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) sq += (embedding[i] - c[i]) * (embedding[i] - c[i]);
  return form == CenterLossForm::squared_halved ? 0.5 * sq : std::sqrt(sq);
}

double verification_loss(const Tensor& logits, const Tensor& embedding, std::size_t label, const CenterBank& bank,
                         double alpha, CenterLossForm form) {
  if (alpha < 0.0) throw ArgumentError("verification_loss: alpha must be non-negative");
  return cross_entropy(logits, label) + alpha * center_loss(embedding, bank, label, form);
}

double weighted_total(std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size()) {
    throw ArgumentError("weighted_total: " + std::to_string(losses.size()) + " losses but " +
                        std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (weights[i] < 0.0) throw ArgumentError("weighted_total: negative weight");
    total += weights[i] * losses[i];
  }
  return total;
}

CenterBank update_centers(const CenterBank& bank, const Tensor& embeddings, std::span<const std::size_t> labels) {
  if (labels.empty()) throw ArgumentError("update_centers: empty batch");
  if (embeddings.rows() != labels.size()) {
    throw DimensionError("update_centers: " + std::to_string(labels.size()) + " labels for embeddings " +
                         shape_string(embeddings.shape()));
  }
  check_embedding_width(embeddings.cols(), bank);
  const std::size_t k = bank.num_classes();
  const std::size_t d = bank.width();
  std::vector<double> sums(k * d, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    check_label(labels[r], k, "update_centers");
    auto row = embeddings.row(r);
    for (std::size_t c = 0; c < d; ++c) sums[labels[r] * d + c] += row[c];
    ++counts[labels[r]];
  }
  CenterBank out = bank;
  for (std::size_t cls = 0; cls < k; ++cls) {
    if (counts[cls] == 0) continue;
    auto center = out.centers.row(cls);
    for (std::size_t c = 0; c < d; ++c) {
      const double mean = sums[cls * d + c] / static_cast<double>(counts[cls]);
      center[c] -= bank.update_rate * (center[c] - mean);
    }
  }
  return out;
}

Var cross_entropy_loss(Var logits, std::span<const std::size_t> labels) {
  return mean(cross_entropy(logits, labels));
}

Var center_loss(Var embeddings, const CenterBank& bank, std::span<const std::size_t> labels, CenterLossForm form) {
  Tape& tape = *embeddings.tape;
  const Tensor& e = tape.value(embeddings);
  check_embedding_width(e.cols(), bank);
  if (labels.size() != e.rows()) {
    throw DimensionError("center_loss: " + std::to_string(labels.size()) + " labels for embeddings " +
                         shape_string(e.shape()));
  }
  Tensor gathered({e.rows(), e.cols()});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    check_label(labels[r], bank.num_classes(), "center_loss");
    auto src = bank.centers.row(labels[r]);
    std::copy(src.begin(), src.end(), gathered.row(r).begin());
  }
  Var diff = sub(embeddings, tape.constant(std::move(gathered)));
  if (form == CenterLossForm::squared_halved) return scale(mean(row_sq_norm(diff)), 0.5);
  return mean(row_norm(diff));
}

Var verification_loss(Var logits, Var embeddings, std::span<const std::size_t> labels, const CenterBank& bank,
                      double alpha, CenterLossForm form) {
  if (alpha < 0.0) throw ArgumentError("verification_loss: alpha must be non-negative");
  Var ce = cross_entropy_loss(logits, labels);
  if (alpha == 0.0) return ce;
  return add(ce, scale(center_loss(embeddings, bank, labels, form), alpha));
}

Var weighted_total(std::span<const Var> losses, std::span<const double> weights) {
  if (losses.empty() || losses.size() != weights.size()) {
    throw ArgumentError("weighted_total: " + std::to_string(losses.size()) + " losses but " +
                        std::to_string(weights.size()) + " weights");
  }
  Var total = scale(losses[0], weights[0]);
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (weights[i] < 0.0) throw ArgumentError("weighted_total: negative weight");
    total = add(total, scale(losses[i], weights[i]));
  }
  if (weights[0] < 0.0) throw ArgumentError("weighted_total: negative weight");
  return total;
}

}  // namespace dmtl
