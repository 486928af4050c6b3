#include "dmtl/synthdata.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

#include "dmtl/errors.hpp"
#include "dmtl/random.hpp"
#include "dmtl/text.hpp"

namespace dmtl {

char to_char(Modality m) { return m == Modality::A ? 'A' : 'B'; }

void ModalitySpec::validate() const {
  if (num_classes < 2) throw ArgumentError("dataset: num_classes must be at least 2");
  if (dim < 1) throw ArgumentError("dataset: dim must be at least 1");
  if (a.noise_sigma < 0.0 || b.noise_sigma < 0.0) throw ArgumentError("dataset: noise_sigma must be non-negative");
  if (a.samples_per_class < 1 || b.samples_per_class < 1) {
    throw ArgumentError("dataset: every class needs samples in both modalities");
  }
  if (gap < 0.0) throw ArgumentError("dataset: gap must be non-negative");
}

std::size_t Dataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

Tensor Dataset::rows(std::span<const std::size_t> idx) const {
  Tensor out({idx.size(), dim});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> Dataset::labels_of(std::span<const std::size_t> idx) const {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

std::vector<std::size_t> Dataset::indices_of(Modality m) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (modality[i] == m) out.push_back(i);
  }
  return out;
}

namespace {

struct AffineMap {
  Eigen::MatrixXd linear;
  Eigen::VectorXd offset;
};

// Rotation near the identity (Q factor of I + gap·G, signs fixed so that
// gap → 0 recovers I), an isotropic scale and an offset.
AffineMap modality_map(const ModalitySpec& spec) {
  const auto d = static_cast<Eigen::Index>(spec.dim);
  Rng rng = make_rng(spec.seed, {2});
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = normal(rng) / std::sqrt(static_cast<double>(d));
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(d, d) + spec.gap * g;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  const double scale = std::exp(0.25 * spec.gap * normal(rng));
  Eigen::VectorXd offset(d);
  for (Eigen::Index i = 0; i < d; ++i) offset(i) = spec.gap * spec.prototype_scale * normal(rng);
  return AffineMap{scale * q, offset};
}

}  // namespace

Dataset generate(const ModalitySpec& spec, std::uint64_t split) {
  spec.validate();
  const std::size_t k = spec.num_classes;
  const std::size_t d = spec.dim;

  Rng proto_rng = make_rng(spec.seed, {1});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> prototypes(k, Eigen::VectorXd(static_cast<Eigen::Index>(d)));
  for (auto& p : prototypes)
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = spec.prototype_scale * normal(proto_rng);

  const AffineMap map = modality_map(spec);

  Dataset data;
  data.dim = d;
  const std::size_t n = k * (spec.a.samples_per_class + spec.b.samples_per_class);
  data.features.reserve(n * d);
  data.labels.reserve(n);
  data.modality.reserve(n);

  Rng noise_rng = make_rng(spec.seed, {3, split});
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::VectorXd mapped = map.linear * prototypes[c] + map.offset;
    const std::array<std::tuple<Modality, ModalityParams, const Eigen::VectorXd*>, 2> sources{
        {{Modality::A, spec.a, &prototypes[c]}, {Modality::B, spec.b, &mapped}}};
    for (const auto& [m, params, base] : sources) {
      for (std::size_t s = 0; s < params.samples_per_class; ++s) {
        for (std::size_t i = 0; i < d; ++i) {
          data.features.push_back((*base)(static_cast<Eigen::Index>(i)) + params.noise_sigma * normal(noise_rng));
        }
        data.labels.push_back(c);
        data.modality.push_back(m);
      }
    }
  }
  return data;
}

std::vector<Pair> make_pairs(const Dataset& data, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs % 2 != 0) throw ArgumentError("make_pairs: n_pairs must be even, got " + std::to_string(n_pairs));
  const std::size_t k = data.num_classes();
  std::vector<std::vector<std::size_t>> a_of(k), b_of(k);
  std::vector<std::size_t> all_a, all_b;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.modality[i] == Modality::A) {
      a_of[data.labels[i]].push_back(i);
      all_a.push_back(i);
    } else {
      b_of[data.labels[i]].push_back(i);
      all_b.push_back(i);
    }
  }
  std::vector<std::size_t> eligible;
  for (std::size_t c = 0; c < k; ++c) {
    if (!a_of[c].empty() && !b_of[c].empty()) eligible.push_back(c);
  }
  if (n_pairs == 0) return {};
  if (eligible.empty()) throw ArgumentError("make_pairs: no class has samples in both modalities");
  std::size_t b_classes = 0;
  for (const auto& v : b_of) b_classes += v.empty() ? 0 : 1;
  if (b_classes < 2) throw ArgumentError("make_pairs: different-identity pairs need two classes in modality B");

  Rng rng = make_rng(seed, {11});
  auto pick = [&rng](const std::vector<std::size_t>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::vector<Pair> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t p = 0; p < n_pairs / 2; ++p) {
    const std::size_t c = pick(eligible);
    pairs.push_back(Pair{pick(a_of[c]), pick(b_of[c]), true});
  }
  for (std::size_t p = 0; p < n_pairs / 2; ++p) {
    const std::size_t a = pick(all_a);
    std::size_t b = pick(all_b);
    while (data.labels[b] == data.labels[a]) b = pick(all_b);
    pairs.push_back(Pair{a, b, false});
  }
  return pairs;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> strata, std::size_t k,
                                                       std::uint64_t seed) {
  if (k < 2) throw ArgumentError("kfold_split: k must be at least 2");
  if (k > strata.size()) {
    throw ArgumentError("kfold_split: k=" + std::to_string(k) + " exceeds " + std::to_string(strata.size()) +
                        " samples");
  }
  std::vector<std::size_t> order(strata.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {13});
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return strata[x] < strata[y]; });
  // Dealing the stratum-sorted order round-robin keeps sizes within one and
  // spreads every stratum evenly.
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::vector<std::size_t>> kfold_split(const Dataset& data, std::size_t k, std::uint64_t seed) {
  return stratified_folds(data.labels, k, seed);
}

CsvSchema CsvSchema::with_features(std::size_t dim) {
  CsvSchema s;
  for (std::size_t i = 0; i < dim; ++i) s.feature_columns.push_back("f" + std::to_string(i));
  return s;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing header row");
  std::vector<std::string> header;
  for (auto col : split(trim(line), ',')) header.emplace_back(trim(col));

  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> feature_idx;
  for (const auto& f : schema.feature_columns) feature_idx.push_back(column(f));
  const std::size_t label_idx = column(schema.label_column);
  const std::size_t modality_idx = column(schema.modality_column);

  Dataset data;
  data.dim = feature_idx.size();
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(header.size()));
    }
    for (auto fi : feature_idx) {
      auto v = parse_double(cells[fi]);
      if (!v) {
        throw ParseError(path.string() + ": row " + std::to_string(row) + ": non-numeric value '" +
                         std::string(cells[fi]) + "' in column '" + header[fi] + "'");
      }
      data.features.push_back(*v);
    }
    auto label = parse_index(cells[label_idx]);
    if (!label) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + ": invalid label '" +
                       std::string(cells[label_idx]) + "'");
    }
    data.labels.push_back(*label);
    const auto m = trim(cells[modality_idx]);
    if (m == "A") {
      data.modality.push_back(Modality::A);
    } else if (m == "B") {
      data.modality.push_back(Modality::B);
    } else {
      throw ParseError(path.string() + ": row " + std::to_string(row) + ": modality must be A or B, got '" +
                       std::string(m) + "'");
    }
  }
  return data;
}

void save_csv(const Dataset& data, const std::filesystem::path& path, const CsvSchema& schema) {
  if (schema.feature_columns.size() != data.dim) {
    throw SchemaError("save_csv: schema has " + std::to_string(schema.feature_columns.size()) +
                      " feature columns for dimension " + std::to_string(data.dim));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& f : schema.feature_columns) out << f << ',';
  out << schema.label_column << ',' << schema.modality_column << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out << format_double(v) << ',';
    out << data.labels[i] << ',' << to_char(data.modality[i]) << '\n';
  }
}

}  // namespace dmtl
