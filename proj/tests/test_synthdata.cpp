#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dmtl/errors.hpp"
#include "dmtl/synthdata.hpp"

using namespace dmtl;
namespace fs = std::filesystem;

namespace {

ModalitySpec spec_with(double sigma_a, double sigma_b, std::uint64_t seed) {
  ModalitySpec s;
  s.num_classes = 6;
  s.dim = 5;
  s.a = {sigma_a, 8};
  s.b = {sigma_b, 8};
  s.seed = seed;
  return s;
}

// Nearest class mean of a reference set, within one modality.
double nearest_mean_accuracy(const Dataset& reference, const Dataset& probe, Modality m) {
  const std::size_t k = reference.num_classes(), d = reference.dim;
  std::vector<double> means(k * d, 0.0);
  std::vector<double> counts(k, 0.0);
  for (auto i : reference.indices_of(m)) {
    for (std::size_t j = 0; j < d; ++j) means[reference.labels[i] * d + j] += reference.row(i)[j];
    counts[reference.labels[i]] += 1;
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) means[c * d + j] /= counts[c];
  }
  std::size_t hits = 0;
  const auto idx = probe.indices_of(m);
  for (auto i : idx) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) dist += std::pow(probe.row(i)[j] - means[c * d + j], 2);
      if (dist < best_d) best_d = dist, best = c;
    }
    hits += best == probe.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

fs::path scratch_file(const std::string& name) { return fs::temp_directory_path() / ("dmtl_synth_" + name); }

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("generate is deterministic and well formed") {
  const ModalitySpec s = spec_with(0.5, 0.2, 4);
  const Dataset d = generate(s);
  CHECK(d == generate(s));
  CHECK_FALSE(d == generate(spec_with(0.5, 0.2, 5)));
  CHECK_FALSE(d == generate(s, 1));
  CHECK(d.size() == 6 * 8 * 2);
  CHECK(d.features.size() == d.size() * 5);
  CHECK(d.num_classes() == 6);
  for (auto m : {Modality::A, Modality::B}) {
    std::set<std::size_t> classes;
    for (auto i : d.indices_of(m)) classes.insert(d.labels[i]);
    CHECK(classes.size() == 6);
  }
  ModalitySpec bad = s;
  bad.num_classes = 1;
  CHECK_THROWS(bad.validate());
  bad = s;
  bad.a.noise_sigma = -1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("noiseless data is separable") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset d = generate(spec_with(0.0, 0.0, seed));
    CHECK(nearest_mean_accuracy(d, d, Modality::A) == 1.0);
    CHECK(nearest_mean_accuracy(d, d, Modality::B) == 1.0);
  }
}

TEST_CASE("difficulty is monotone in noise") {
  std::vector<double> mean_acc;
  for (double sigma : {0.1, 0.5, 1.0, 2.0}) {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ModalitySpec clean = spec_with(0.0, 0.0, seed);
      ModalitySpec noisy = spec_with(sigma, sigma, seed);
      noisy.a.samples_per_class = 50;
      acc += nearest_mean_accuracy(generate(clean), generate(noisy, 1), Modality::A) / 10.0;
    }
    mean_acc.push_back(acc);
  }
  for (std::size_t i = 1; i < mean_acc.size(); ++i) CHECK(mean_acc[i] <= mean_acc[i - 1]);
  CHECK(mean_acc.front() > mean_acc.back());
}

TEST_CASE("make_pairs") {
  const Dataset d = generate(spec_with(0.5, 0.5, 1));
  const auto pairs = make_pairs(d, 200, 3);
  CHECK(pairs.size() == 200);
  CHECK(std::count_if(pairs.begin(), pairs.end(), [](const Pair& p) { return p.same; }) == 100);
  for (const Pair& p : pairs) {
    CHECK(d.modality[p.first] == Modality::A);
    CHECK(d.modality[p.second] == Modality::B);
    CHECK((d.labels[p.first] == d.labels[p.second]) == p.same);
  }
  CHECK(make_pairs(d, 200, 3) == pairs);
  CHECK_FALSE(make_pairs(d, 200, 4) == pairs);
  CHECK_THROWS_AS(make_pairs(d, 7, 3), ArgumentError);
}

TEST_CASE("kfold_split") {
  ModalitySpec s = spec_with(0.5, 0.5, 2);
  s.num_classes = 5;
  s.a.samples_per_class = 10;
  s.b.samples_per_class = 10;
  const Dataset d = generate(s);
  REQUIRE(d.size() == 100);
  const auto folds = kfold_split(d, 10, 1);
  REQUIRE(folds.size() == 10);
  std::vector<std::size_t> all;
  for (const auto& f : folds) {
    CHECK(f.size() == 10);
    // Stratified: each fold holds two samples of every class.
    std::vector<int> per_class(5, 0);
    for (auto i : f) per_class[d.labels[i]]++;
    for (int c : per_class) CHECK(c == 2);
    all.insert(all.end(), f.begin(), f.end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(kfold_split(d, 10, 1) == folds);
  CHECK_FALSE(kfold_split(d, 10, 2) == folds);

  const auto uneven = kfold_split(d, 7, 0);
  std::size_t lo = 1000, hi = 0;
  for (const auto& f : uneven) lo = std::min(lo, f.size()), hi = std::max(hi, f.size());
  CHECK(hi - lo <= 1);
  CHECK_THROWS_AS(kfold_split(d, 101, 0), ArgumentError);
  CHECK_THROWS_AS(kfold_split(d, 1, 0), ArgumentError);
}

TEST_CASE("csv round trip") {
  const Dataset d = generate(spec_with(0.7, 0.1, 9));
  const CsvSchema schema = CsvSchema::with_features(5);
  const fs::path p = scratch_file("roundtrip.csv");
  save_csv(d, p, schema);
  CHECK(load_csv(p, schema) == d);
  fs::remove(p);
}

TEST_CASE("csv edge cases and errors") {
  const CsvSchema schema = CsvSchema::with_features(2);
  const fs::path p = scratch_file("edge.csv");
  std::ofstream(p) << "f0,f1,label,modality\n";
  const Dataset empty = load_csv(p, schema);
  CHECK(empty.size() == 0);

  std::ofstream(p) << "modality,label,f1,f0\nB,1,0.5,-2.25\nA,0,1e-3,4\n";
  const Dataset reordered = load_csv(p, schema);
  REQUIRE(reordered.size() == 2);
  CHECK(reordered.row(0)[0] == -2.25);
  CHECK(reordered.row(1)[1] == 1e-3);
  CHECK(reordered.modality[0] == Modality::B);

  std::ofstream(p) << "f0,label,modality\n1,0,A\n";
  try {
    load_csv(p, schema);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("f1") != std::string::npos);
  }

  std::ofstream(p) << "f0,f1,label,modality\n1,2,0,A\n3,4,xyz,B\n";
  try {
    load_csv(p, schema);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }

  std::ofstream(p) << "f0,f1,label,modality\n1,2,0,A\n3,4.5.6,1,B\n";
  CHECK_THROWS_AS(load_csv(p, schema), ParseError);
  CHECK_THROWS_AS(load_csv(scratch_file("missing.csv"), schema), IoError);
  fs::remove(p);
}

}
