#include "dmtl/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dmtl/errors.hpp"

namespace dmtl {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size()) throw ArgumentError("accuracy: length mismatch");
  if (labels.empty()) throw ArgumentError("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

RocCurve roc_curve(std::span<const double> scores, std::span<const bool> same) {
  if (scores.size() != same.size()) throw ArgumentError("roc_curve: scores and flags differ in length");
  const auto positives = static_cast<std::size_t>(std::count(same.begin(), same.end(), true));
  const std::size_t negatives = same.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ArgumentError("roc_curve: need at least one same-identity and one different-identity pair");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) {
      if (same[order[i]]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    curve.points.push_back({t, static_cast<double>(tp) / static_cast<double>(positives),
                            static_cast<double>(fp) / static_cast<double>(negatives)});
  }
  return curve;
}

double val_at_far(const RocCurve& curve, double far) {
  if (!(far > 0.0 && far < 1.0)) throw ArgumentError("val_at_far: far must lie in (0,1)");
  double best = -1.0;
  for (const auto& p : curve.points) {
    if (p.fpr <= far) best = std::max(best, p.tpr);
  }
  if (best < 0.0) {
    spdlog::warn("val_at_far: no ROC point has FPR <= {}", far);
    return 0.0;
  }
  return best;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double similarity(std::span<const double> a, std::span<const double> b, Similarity kind) {
  if (kind == Similarity::cosine) return cosine_similarity(a, b);
  if (a.size() != b.size()) throw DimensionError("similarity: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return -std::sqrt(s);
}

double rank_k_identification(const Tensor& probes, std::span<const std::size_t> probe_labels, const Tensor& gallery,
                             std::span<const std::size_t> gallery_labels, std::size_t k, Similarity kind) {
  if (gallery_labels.empty()) throw ArgumentError("rank_k_identification: empty gallery");
  if (k < 1) throw ArgumentError("rank_k_identification: k must be at least 1");
  if (k > gallery_labels.size()) {
    throw ArgumentError("rank_k_identification: k=" + std::to_string(k) + " exceeds gallery size " +
                        std::to_string(gallery_labels.size()));
  }
  if (probes.rows() != probe_labels.size() || gallery.rows() != gallery_labels.size()) {
    throw DimensionError("rank_k_identification: label counts do not match embedding rows");
  }
  if (probe_labels.empty()) throw ArgumentError("rank_k_identification: no probes");
  if (probes.cols() != gallery.cols()) throw DimensionError("rank_k_identification: embedding widths differ");

  const std::size_t g = gallery_labels.size();
  std::vector<double> sim(g);
  std::vector<std::size_t> order(g);
  std::size_t hits = 0;
  for (std::size_t p = 0; p < probe_labels.size(); ++p) {
    for (std::size_t j = 0; j < g; ++j) sim[j] = similarity(probes.row(p), gallery.row(j), kind);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return sim[a] > sim[b] || (sim[a] == sim[b] && a < b); });
    for (std::size_t r = 0; r < k; ++r) {
      if (gallery_labels[order[r]] == probe_labels[p]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(probe_labels.size());
}

FoldSummary aggregate_folds(std::span<const double> values) {
  if (values.size() < 2) throw ArgumentError("aggregate_folds: need at least two folds for a standard deviation");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(sorted.size());
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  return FoldSummary{mean, std::sqrt(ss / static_cast<double>(sorted.size() - 1))};
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace dmtl
