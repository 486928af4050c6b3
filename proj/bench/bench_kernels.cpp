// Parallel kernels against their serial references. Run with
// OMP_NUM_THREADS=N to vary the parallel side.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dmtl/kernels.hpp"

namespace {

using dmtl::kernels::RmspropCoefficients;

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <auto Kernel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Kernel>
void BM_rmsprop(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto param = random_values(n, 1);
  const auto grad = random_values(n, 2);
  std::vector<double> acc(n), buf(n);
  const RmspropCoefficients k{1e-3, 0.9, 0.9, 5e-5, 1e-10};
  for (auto _ : state) {
    Kernel(param, grad, acc, buf, k);
    benchmark::DoNotOptimize(param.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

void gemm_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                   std::size_t k, std::size_t n) {
  dmtl::kernels::gemm(a, b, c, m, k, n);
}
void gemm_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                 std::size_t k, std::size_t n) {
  dmtl::kernels::serial::gemm(a, b, c, m, k, n);
}
void gemm_at_b_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                        std::size_t k, std::size_t n) {
  dmtl::kernels::gemm_at_b(a, b, c, m, k, n);
}
void gemm_at_b_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                      std::size_t k, std::size_t n) {
  dmtl::kernels::serial::gemm_at_b(a, b, c, m, k, n);
}
void gemm_a_bt_parallel(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                        std::size_t k, std::size_t n) {
  dmtl::kernels::gemm_a_bt(a, b, c, m, k, n);
}
void gemm_a_bt_serial(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
                      std::size_t k, std::size_t n) {
  dmtl::kernels::serial::gemm_a_bt(a, b, c, m, k, n);
}
void rmsprop_parallel(std::span<double> p, std::span<const double> g, std::span<double> a, std::span<double> b,
                      const RmspropCoefficients& k) {
  dmtl::kernels::rmsprop_update(p, g, a, b, k);
}
void rmsprop_serial(std::span<double> p, std::span<const double> g, std::span<double> a, std::span<double> b,
                    const RmspropCoefficients& k) {
  dmtl::kernels::serial::rmsprop_update(p, g, a, b, k);
}

}  // namespace

BENCHMARK(BM_gemm<gemm_serial>)->Name("gemm/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<gemm_parallel>)->Name("gemm/parallel")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<gemm_at_b_serial>)->Name("gemm_at_b/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<gemm_at_b_parallel>)->Name("gemm_at_b/parallel")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<gemm_a_bt_serial>)->Name("gemm_a_bt/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<gemm_a_bt_parallel>)->Name("gemm_a_bt/parallel")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_rmsprop<rmsprop_serial>)->Name("rmsprop/serial")->RangeMultiplier(8)->Range(1 << 10, 1 << 20);
BENCHMARK(BM_rmsprop<rmsprop_parallel>)->Name("rmsprop/parallel")->RangeMultiplier(8)->Range(1 << 10, 1 << 20);

BENCHMARK_MAIN();
