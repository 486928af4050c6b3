#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dmtl/tensor.hpp"

namespace dmtl {

struct RocPoint {
  double threshold;  // accept when score ≥ threshold
  double tpr;
  double fpr;

  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

/// Exact empirical ROC, thresholds in decreasing order. The first point is
/// (+∞, 0, 0); one point follows per distinct score, so the last is (1, 1).
struct RocCurve {
  std::vector<RocPoint> points;
};

enum class Similarity { cosine, negative_euclidean };

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);
RocCurve roc_curve(std::span<const double> scores, std::span<const bool> same);
/// Largest TPR among points with FPR ≤ far; 0 (with a diagnostic) when none qualify.
double val_at_far(const RocCurve& curve, double far);
/// Trapezoidal area under the curve.
double auc(const RocCurve& curve);

double cosine_similarity(std::span<const double> a, std::span<const double> b);
double similarity(std::span<const double> a, std::span<const double> b, Similarity kind);

/// Fraction of probes whose k nearest gallery rows (by similarity, ties to the
/// lower gallery index) contain a same-label row.
double rank_k_identification(const Tensor& probes, std::span<const std::size_t> probe_labels, const Tensor& gallery,
                             std::span<const std::size_t> gallery_labels, std::size_t k,
                             Similarity kind = Similarity::cosine);

struct FoldSummary {
  double mean;
  double stddev;  // (k−1) denominator
};

FoldSummary aggregate_folds(std::span<const double> values);

std::vector<std::size_t> argmax_rows(const Tensor& logits);

}  // namespace dmtl
