#pragma once

// Dense double-precision kernels behind every matrix product and reduction
// in the library. A portable scalar table is always available; an AVX2/FMA
// table is compiled when the toolchain allows and picked at runtime when the
// CPU supports it. Set MOMO_KERNELS=scalar|avx2 to force a table.
//
// Every kernel computes each output element with a fixed operation order that
// depends only on that element's inputs and the reduction length, so results
// do not change with the surrounding matrix shape.

#include <cstddef>
#include <string_view>

namespace momo::kernels {

struct KernelTable {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m,n] (+)= A[m,k] * B[n,k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                  std::size_t k, bool accumulate);
  // C[m,n] (+)= A[m,k] * B[k,n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                  std::size_t k, bool accumulate);
  // C[m,n] (+)= A[k,m]^T * B[k,n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                  std::size_t k, bool accumulate);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table() noexcept;
bool cpu_has_avx2() noexcept;

// The table used by the library. Chosen once on first use.
const KernelTable& active() noexcept;
// Override the active table by name ("scalar" or "avx2"). Returns false when
// the named table is unavailable on this build/CPU.
bool select(std::string_view name) noexcept;

}  // namespace momo::kernels
