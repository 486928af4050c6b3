#pragma once

// Brute-force reference implementations for the metrics, written without
// sorting so they share no logic with the library.

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "dmtl/metrics.hpp"
#include "dmtl/tensor.hpp"

namespace oracle {

inline dmtl::RocCurve roc(std::span<const double> scores, std::span<const bool> same) {
  double pos = 0, neg = 0;
  for (bool s : same) (s ? pos : neg) += 1;
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  dmtl::RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (same[i] ? tp : fp)++;
    }
    curve.points.push_back({t, static_cast<double>(tp) / pos, static_cast<double>(fp) / neg});
  }
  return curve;
}

inline double val_at_far(std::span<const double> scores, std::span<const bool> same, double far) {
  const dmtl::RocCurve curve = roc(scores, same);
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.fpr <= far && p.tpr > best) best = p.tpr;
  }
  return best;
}

// P(score⁺ > score⁻) + ½·P(tie) over all positive/negative pairs.
inline double mann_whitney(std::span<const double> scores, std::span<const bool> same) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!same[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (same[j]) continue;
      pairs += 1;
      if (scores[i] > scores[j]) wins += 1;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// A probe's position of gallery item j is the number of items ranked ahead of
// it: higher similarity, or equal similarity and a lower index.
inline double rank_k(const dmtl::Tensor& probes, std::span<const std::size_t> probe_labels,
                     const dmtl::Tensor& gallery, std::span<const std::size_t> gallery_labels, std::size_t k,
                     dmtl::Similarity kind) {
  std::size_t hits = 0;
  for (std::size_t p = 0; p < probe_labels.size(); ++p) {
    std::vector<double> sim(gallery_labels.size());
    for (std::size_t j = 0; j < sim.size(); ++j) sim[j] = dmtl::similarity(probes.row(p), gallery.row(j), kind);
    bool hit = false;
    for (std::size_t j = 0; j < sim.size() && !hit; ++j) {
      if (gallery_labels[j] != probe_labels[p]) continue;
      std::size_t ahead = 0;
      for (std::size_t i = 0; i < sim.size(); ++i) ahead += sim[i] > sim[j] || (sim[i] == sim[j] && i < j);
      hit = ahead < k;
    }
    hits += hit;
  }
  return static_cast<double>(hits) / static_cast<double>(probe_labels.size());
}

struct ScoreInstance {
  std::vector<double> scores;
  std::unique_ptr<bool[]> flags;
  std::size_t n = 0;
  std::span<const bool> same() const { return {flags.get(), n}; }
};

// Scores drawn from a coarse grid so ties are common; both classes present.
inline ScoreInstance random_scores(std::mt19937_64& rng, std::size_t n) {
  ScoreInstance inst;
  inst.n = n;
  inst.flags = std::make_unique<bool[]>(n);
  std::uniform_int_distribution<int> level(0, 12);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    inst.flags[i] = i == 0 ? true : i == 1 ? false : coin(rng);
    inst.scores.push_back(level(rng) / 4.0 + (inst.flags[i] ? 0.5 : 0.0));
  }
  return inst;
}

// Embeddings on an integer grid with duplicated rows, so similarity ties occur.
inline dmtl::Tensor grid_embeddings(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  dmtl::Tensor t(dmtl::Shape{rows, cols});
  std::uniform_int_distribution<int> v(-2, 2);
  for (std::size_t r = 0; r < rows; ++r) {
    if (r > 0 && rng() % 5 == 0) {
      const std::size_t src = rng() % r;
      for (std::size_t c = 0; c < cols; ++c) t(r, c) = t(src, c);
      continue;
    }
    for (std::size_t c = 0; c < cols; ++c) t(r, c) = v(rng);
  }
  return t;
}

}  // namespace oracle
