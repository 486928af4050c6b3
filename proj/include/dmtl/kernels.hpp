#pragma once

#include <cstddef>
#include <span>

// Dense inner loops. The default entry points are OpenMP-parallel over output
// rows (each output element is owned by one thread and summed in a fixed
// order, so results do not depend on the thread count). The serial namespace
// holds straightforward reference loops used by the tests and the benchmark.
namespace dmtl::kernels {

// c[m×n] = a[m×k] · b[k×n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n);

// c[m×n] = a[k×m]ᵀ · b[k×n]
void gemm_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);

// c[m×n] = a[m×k] · b[n×k]ᵀ
void gemm_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);

struct RmspropCoefficients {
  double lr;
  double rho;
  double momentum;
  double weight_decay;
  double epsilon;
};

// acc ← ρ·acc + (1−ρ)·g²;  buf ← μ·buf + lr·g/√(acc+ε);  p ← p − buf − lr·wd·p
void rmsprop_update(std::span<double> param, std::span<const double> grad, std::span<double> acc,
                    std::span<double> buf, const RmspropCoefficients& k);

int thread_count();

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
          std::size_t k, std::size_t n);
void gemm_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void gemm_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n);
void rmsprop_update(std::span<double> param, std::span<const double> grad, std::span<double> acc,
                    std::span<double> buf, const RmspropCoefficients& k);

}  // namespace serial
}  // namespace dmtl::kernels
