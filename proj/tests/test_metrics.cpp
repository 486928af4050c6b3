#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "dmtl/errors.hpp"
#include "dmtl/metrics.hpp"
#include "oracles.hpp"

using namespace dmtl;

namespace {

// std::vector<bool> has no contiguous storage to span over.
struct Flags {
  std::unique_ptr<bool[]> data;
  std::size_t n;
  operator std::span<const bool>() const { return {data.get(), n}; }
};

Flags flags(const std::vector<char>& v) {
  Flags f{std::make_unique<bool[]>(v.size()), v.size()};
  for (std::size_t i = 0; i < v.size(); ++i) f.data[i] = v[i] != 0;
  return f;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("accuracy examples") {
  const std::vector<std::size_t> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c{1, 2, 3, 0};
  CHECK(accuracy(a, a) == 1.0);
  CHECK(accuracy(a, b) == 0.0);
  CHECK(accuracy(c, a) == 0.75);
  CHECK_THROWS_AS(accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}), ArgumentError);
  CHECK_THROWS_AS(accuracy(a, std::vector<std::size_t>{1}), ArgumentError);
}

TEST_CASE("roc examples") {
  const std::vector<double> separated{0.9, 0.8, 0.2, 0.1};
  const std::vector<char> sep_flags{1, 1, 0, 0};
  const RocCurve perfect = roc_curve(separated, flags(sep_flags));
  CHECK(std::any_of(perfect.points.begin(), perfect.points.end(),
                    [](const RocPoint& p) { return p.fpr == 0.0 && p.tpr == 1.0; }));
  CHECK(val_at_far(perfect, 0.001) == 1.0);
  CHECK(val_at_far(perfect, 0.5) == 1.0);
  CHECK(auc(perfect) == 1.0);

  const std::vector<double> equal(6, 0.3);
  const std::vector<char> mixed{1, 0, 1, 0, 0, 1};
  const RocCurve diag = roc_curve(equal, flags(mixed));
  REQUIRE(diag.points.size() == 2);
  CHECK(diag.points.front().tpr == 0.0);
  CHECK(diag.points.front().fpr == 0.0);
  CHECK(diag.points.back().tpr == 1.0);
  CHECK(diag.points.back().fpr == 1.0);
  CHECK(auc(diag) == 0.5);

  const std::vector<char> single{1, 1};
  CHECK_THROWS_AS(roc_curve(std::vector<double>{1, 2}, flags(single)), ArgumentError);

  // Highest score is a negative: no positive is accepted before the first false accept.
  const std::vector<double> s{0.9, 0.8, 0.7};
  const std::vector<char> f{0, 1, 1};
  CHECK(val_at_far(roc_curve(s, flags(f)), 0.5) == 0.0);
  CHECK_THROWS_AS(val_at_far(perfect, 0.0), ArgumentError);
}

TEST_CASE("random scorer has VAL close to FAR") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t n = 200000;
  std::vector<double> scores(n);
  std::vector<char> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    f[i] = i % 2;
  }
  CHECK(val_at_far(roc_curve(scores, flags(f)), 0.01) == doctest::Approx(0.01).epsilon(0.15));
}

TEST_CASE("roc, val_at_far and auc match brute force") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 50; ++t) {
    const auto inst = oracle::random_scores(rng, 2 + rng() % 199);
    const RocCurve curve = roc_curve(inst.scores, inst.same());
    CHECK(curve.points == oracle::roc(inst.scores, inst.same()).points);
    for (double far : {0.001, 0.01, 0.1, 0.5}) {
      CHECK(val_at_far(curve, far) == oracle::val_at_far(inst.scores, inst.same(), far));
    }
    CHECK(std::abs(auc(curve) - oracle::mann_whitney(inst.scores, inst.same())) <= 1e-12);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr);
      CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
    }
  }
}

TEST_CASE("metrics are permutation invariant") {
  std::mt19937_64 rng(5);
  auto inst = oracle::random_scores(rng, 150);
  const RocCurve before = roc_curve(inst.scores, inst.same());
  std::vector<std::size_t> perm(inst.n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> s2(inst.n);
  std::vector<char> f2(inst.n);
  for (std::size_t i = 0; i < inst.n; ++i) {
    s2[i] = inst.scores[perm[i]];
    f2[i] = inst.flags[perm[i]];
  }
  CHECK(roc_curve(s2, flags(f2)).points == before.points);
}

TEST_CASE("rank_k examples") {
  std::mt19937_64 rng(3);
  const Tensor g = oracle::grid_embeddings(rng, 12, 3);
  std::vector<std::size_t> labels(12);
  std::iota(labels.begin(), labels.end(), 0);
  const Tensor distinct = Tensor::matrix({{1, 0}, {0, 1}, {-1, 0.2}, {0.3, -1}});
  const std::vector<std::size_t> dl{4, 7, 1, 7};
  CHECK(rank_k_identification(distinct, dl, distinct, dl, 1) == 1.0);
  CHECK(rank_k_identification(distinct, dl, distinct, dl, 4) == 1.0);
  CHECK(rank_k_identification(g, labels, g, labels, 12) == 1.0);
  CHECK_THROWS_AS(rank_k_identification(g, labels, g, labels, 13), ArgumentError);
  CHECK_THROWS_AS(rank_k_identification(g, labels, g, labels, 0), ArgumentError);
}

TEST_CASE("rank_k matches the exhaustive oracle and is monotone in k") {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 50; ++t) {
    const std::size_t gsize = 10 + rng() % 60, d = 2 + rng() % 3;
    const Tensor probes = oracle::grid_embeddings(rng, 50, d);
    const Tensor gallery = oracle::grid_embeddings(rng, gsize, d);
    std::vector<std::size_t> pl(50), gl(gsize);
    for (auto& l : pl) l = rng() % 8;
    for (auto& l : gl) l = rng() % 8;
    for (auto kind : {Similarity::cosine, Similarity::negative_euclidean}) {
      double prev = 0.0;
      for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{5}, std::size_t{10}}) {
        const double got = rank_k_identification(probes, pl, gallery, gl, k, kind);
        CHECK(got == oracle::rank_k(probes, pl, gallery, gl, k, kind));
        CHECK(got >= prev);
        prev = got;
      }
    }
  }
}

TEST_CASE("aggregate_folds examples") {
  const std::vector<double> same(10, 0.42);
  const FoldSummary s = aggregate_folds(same);
  CHECK(s.mean == doctest::Approx(0.42).epsilon(1e-15));
  CHECK(s.stddev == doctest::Approx(0.0).epsilon(1e-15));
  const FoldSummary t = aggregate_folds(std::vector<double>{1, 2, 3});
  CHECK(t.mean == 2.0);
  CHECK(t.stddev == 1.0);
  const FoldSummary u = aggregate_folds(std::vector<double>{3, 1, 2});
  CHECK(u.mean == t.mean);
  CHECK(u.stddev == t.stddev);
  CHECK_THROWS_AS(aggregate_folds(std::vector<double>{1}), ArgumentError);
}

TEST_CASE("similarity") {
  const std::vector<double> a{1, 0}, b{0, 2}, c{3, 0};
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, c) == 1.0);
  CHECK(similarity(a, c, Similarity::negative_euclidean) == -2.0);
  CHECK(argmax_rows(Tensor::matrix({{0, 3, 1}, {5, 5, 2}})) == std::vector<std::size_t>{1, 0});
}

}
