#include "byolim/gemm.hpp"

#include <algorithm>
#include <vector>

namespace byolim {
namespace {

constexpr std::size_t kBlockK = 128;
constexpr std::size_t kBlockN = 512;

// C[m x n] += A[m x k] * B[k x n], all row-major and untransposed.
template <class T>
void kernel_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
               const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t jn = std::min(kBlockN, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t pn = std::min(kBlockK, k - p0);
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        T* c0 = c + i * ldc + j0;
        T* c1 = c0 + ldc;
        T* c2 = c1 + ldc;
        T* c3 = c2 + ldc;
        for (std::size_t p = p0; p < p0 + pn; ++p) {
          const T a0 = a[i * lda + p];
          const T a1 = a[(i + 1) * lda + p];
          const T a2 = a[(i + 2) * lda + p];
          const T a3 = a[(i + 3) * lda + p];
          const T* brow = b + p * ldb + j0;
          for (std::size_t j = 0; j < jn; ++j) {
            const T bv = brow[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        T* crow = c + i * ldc + j0;
        for (std::size_t p = p0; p < p0 + pn; ++p) {
          const T av = a[i * lda + p];
          const T* brow = b + p * ldb + j0;
          for (std::size_t j = 0; j < jn; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

template <class T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols, std::size_t ld) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * ld + c];
  return out;
}

}  // namespace

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
          std::size_t ldc) {
  if (m == 0 || n == 0) return;
  std::vector<T> acc(m * n, T(0));
  if (k > 0) {
    std::vector<T> a_packed;
    std::vector<T> b_packed;
    if (trans_a) {
      a_packed = transposed(a, k, m, lda);
      a = a_packed.data();
      lda = k;
    }
    if (trans_b) {
      b_packed = transposed(b, n, k, ldb);
      b = b_packed.data();
      ldb = n;
    }
    kernel_nn(m, n, k, a, lda, b, ldb, acc.data(), n);
  }
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    const T* arow = acc.data() + i * n;
    if (beta == T(0)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = alpha * arow[j];
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] = alpha * arow[j] + beta * crow[j];
    }
  }
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, float, const float*,
                          std::size_t, const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, double,
                           const double*, std::size_t, const double*, std::size_t, double,
                           double*, std::size_t);

}  // namespace byolim
