#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmtl/tensor.hpp"

namespace dmtl {

enum class Modality : std::uint8_t { A, B };

char to_char(Modality m);

struct ModalityParams {
  double noise_sigma = 0.5;  // difficulty knob
  std::size_t samples_per_class = 20;

  friend bool operator==(const ModalityParams&, const ModalityParams&) = default;
};

/// Two renderings of the same K identities. Modality A is prototype + noise;
/// modality B passes the prototype through a fixed random affine map first.
struct ModalitySpec {
  std::size_t num_classes = 10;
  std::size_t dim = 16;
  double prototype_scale = 1.0;
  double gap = 0.5;  // 0 makes the affine map the identity
  ModalityParams a;
  ModalityParams b;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const ModalitySpec&, const ModalitySpec&) = default;
};

struct Dataset {
  std::size_t dim = 0;
  std::vector<double> features;  // N × dim, row-major
  std::vector<std::size_t> labels;
  std::vector<Modality> modality;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  std::size_t num_classes() const;  // 1 + max label, 0 when empty
  Tensor rows(std::span<const std::size_t> idx) const;
  std::vector<std::size_t> labels_of(std::span<const std::size_t> idx) const;
  std::vector<std::size_t> indices_of(Modality m) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Prototypes and the modality map depend only on spec.seed; the noise draws
/// also depend on `split`, so split 0 and split 1 are independent samples of
/// the same identities (train and test).
Dataset generate(const ModalitySpec& spec, std::uint64_t split = 0);

struct Pair {
  std::size_t first;   // modality-A sample
  std::size_t second;  // modality-B sample
  bool same = false;

  friend bool operator==(const Pair&, const Pair&) = default;
};

/// n_pairs/2 same-identity and n_pairs/2 different-identity cross-modal pairs.
std::vector<Pair> make_pairs(const Dataset& data, std::size_t n_pairs, std::uint64_t seed);

/// k disjoint folds covering every index, sizes within one of each other,
/// stratified by class.
std::vector<std::vector<std::size_t>> kfold_split(const Dataset& data, std::size_t k, std::uint64_t seed);

/// The same procedure over arbitrary strata (one integer per item).
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> strata, std::size_t k,
                                                       std::uint64_t seed);

struct CsvSchema {
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
  std::string modality_column = "modality";

  static CsvSchema with_features(std::size_t dim);  // f0..f{dim-1}

  friend bool operator==(const CsvSchema&, const CsvSchema&) = default;
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
void save_csv(const Dataset& data, const std::filesystem::path& path, const CsvSchema& schema);

}  // namespace dmtl
