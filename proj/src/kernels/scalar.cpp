#include "momo/kernels.hpp"

namespace momo::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                    std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot_scalar(ar, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + v : v;
    }
  }
}

void gemm_nn_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                    std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* cr = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) cr[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) axpy_scalar(a[i * k + p], b + p * n, cr, n);
  }
}

void gemm_tn_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                    std::size_t k, bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double* ar = a + p * m;
    const double* br = b + p * n;
    for (std::size_t i = 0; i < m; ++i) axpy_scalar(ar[i], br, c + i * n, n);
  }
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{"scalar", dot_scalar, axpy_scalar, gemm_nt_scalar, gemm_nn_scalar,
                                 gemm_tn_scalar};
  return table;
}

}  // namespace momo::kernels
