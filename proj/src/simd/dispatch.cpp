#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernels_impl.hpp"

namespace coper::simd {
namespace {

bool cpu_has_avx2() {
#if defined(COPER_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const KernelTable* avx2 = avx2_kernels();
  if (const char* env = std::getenv("COPER_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2 == nullptr) {
      throw std::runtime_error("COPER_SIMD=avx2 requested but AVX2/FMA is unavailable");
    }
  }
  return avx2 != nullptr ? avx2 : &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& scalar_kernels() { return detail::scalar_table(); }

const KernelTable* avx2_kernels() {
#if defined(COPER_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &detail::avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

Isa active_isa() { return active().isa; }

void set_isa(Isa isa) {
  if (isa == Isa::scalar) {
    current().store(&scalar_kernels());
    return;
  }
  const KernelTable* avx2 = avx2_kernels();
  if (avx2 == nullptr) throw std::invalid_argument("AVX2/FMA kernels unavailable on this CPU");
  current().store(avx2);
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  thread_local std::vector<double> packed;
  packed.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = brow[p];
  }
  active().gemm_nn(m, n, k, a, packed.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  thread_local std::vector<double> packed;
  packed.resize(m * k);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    for (std::size_t i = 0; i < m; ++i) packed[i * k + p] = arow[i];
  }
  active().gemm_nn(m, n, k, packed.data(), b, c, accumulate);
}

}  // namespace coper::simd
