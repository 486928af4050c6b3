#pragma once

#include <doctest.h>

#include <cmath>
#include <random>

#include "dmtl/tensor.hpp"

namespace testing {

inline dmtl::Tensor random_tensor(std::mt19937_64& rng, dmtl::Shape shape, double lo = -1.0, double hi = 1.0) {
  dmtl::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline void check_close(const dmtl::Tensor& a, const dmtl::Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace testing
