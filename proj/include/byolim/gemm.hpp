#pragma once

#include <cstddef>

namespace byolim {

/// Row-major C = alpha * op(A) * op(B) + beta * C.
///
/// op(A) is M x K, op(B) is K x N. Leading dimensions are the row strides of
/// the stored (untransposed) matrices. Summation order is fixed, so results
/// are bit-reproducible for identical inputs.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
          std::size_t ldc);

}  // namespace byolim
