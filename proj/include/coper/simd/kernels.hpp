#pragma once

// Dense double-precision kernels used by the tensor layer.
//
// Every kernel exists as a portable scalar reference and, on x86-64, as an
// AVX2+FMA variant compiled in its own translation unit. The active table is
// chosen once at startup from CPUID and may be overridden with the
// COPER_SIMD environment variable ("scalar" or "avx2") or set_isa().

#include <cstddef>
#include <string_view>

namespace coper::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  // c[m,n] (+)= a[m,k] * b[k,n], all row-major and contiguous.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double alpha, const double* x, double* out, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += a * b
  void (*mul_acc)(const double* a, const double* b, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_kernels();

// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

const KernelTable& active();
Isa active_isa();

// Switches the process-wide table. Throws std::invalid_argument if the
// requested ISA is unavailable on this machine.
void set_isa(Isa isa);

std::string_view isa_name(Isa isa);

// Transposed products, implemented by packing into a scratch buffer and
// calling the active gemm_nn.
// c[m,n] (+)= a[m,k] * b[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// c[m,n] (+)= a[k,m]^T * b[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

}  // namespace coper::simd
