#pragma once

// Small dense kernels shared by convolution, linear and attention ops.
// All matrices are row-major. Loops are ordered so the innermost loop is a
// contiguous axpy the compiler can vectorise.

#include <cstdint>

namespace wfn::detail {

/// c[m,n] += sum_k a[m,k] * b[k,n]
inline void gemm_nn_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                        std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::int64_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + l * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// c[k,n] += sum_m a[m,k] * b[m,n]   (c += a^T b)
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                        std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::int64_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      double* crow = c + l * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// c[m,n] += sum_k a[m,k] * b[n,k]   (c += a b^T)
inline void gemm_nt_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                        std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      std::int64_t l = 0;
      for (; l + 4 <= k; l += 4) {
        s0 += arow[l] * brow[l];
        s1 += arow[l + 1] * brow[l + 1];
        s2 += arow[l + 2] * brow[l + 2];
        s3 += arow[l + 3] * brow[l + 3];
      }
      for (; l < k; ++l) s0 += arow[l] * brow[l];
      crow[j] += (s0 + s1) + (s2 + s3);
    }
  }
}

}  // namespace wfn::detail
