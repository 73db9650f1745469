#include "tfnet/core/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tfnet::kernels {
namespace {

// Columns per register tile: four 512-bit vectors per row.
template <typename T>
constexpr int kTileCols = 256 / sizeof(T);

template <typename T, int R, int W>
inline void tile_fixed(int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  T acc[R][W];
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < W; ++j) acc[r][j] = c[r * ldc + j];
  for (int p = 0; p < k; ++p) {
    const T* brow = b + static_cast<long>(p) * ldb;
    for (int r = 0; r < R; ++r) {
      const T av = a[r * lda + p];
      for (int j = 0; j < W; ++j) acc[r][j] = std::fma(av, brow[j], acc[r][j]);
    }
  }
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < W; ++j) c[r * ldc + j] = acc[r][j];
}

template <typename T, int R>
inline void tile_ragged(int w, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  T acc[R][kTileCols<T>];
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < w; ++j) acc[r][j] = c[r * ldc + j];
  for (int p = 0; p < k; ++p) {
    const T* brow = b + static_cast<long>(p) * ldb;
    for (int r = 0; r < R; ++r) {
      const T av = a[r * lda + p];
      for (int j = 0; j < w; ++j) acc[r][j] = std::fma(av, brow[j], acc[r][j]);
    }
  }
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < w; ++j) c[r * ldc + j] = acc[r][j];
}

template <typename T, int R>
void row_block(int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  constexpr int W = kTileCols<T>;
  int j0 = 0;
  for (; j0 + W <= n; j0 += W) tile_fixed<T, R, W>(k, a, lda, b + j0, ldb, c + j0, ldc);
  if (j0 < n) tile_ragged<T, R>(n - j0, k, a, lda, b + j0, ldb, c + j0, ldc);
}

}  // namespace

template <typename T>
void gemm_acc(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  int i = 0;
  for (; i + 4 <= m; i += 4)
    row_block<T, 4>(n, k, a + static_cast<long>(i) * lda, lda, b, ldb,
                    c + static_cast<long>(i) * ldc, ldc);
  for (; i < m; ++i)
    row_block<T, 1>(n, k, a + static_cast<long>(i) * lda, lda, b, ldb,
                    c + static_cast<long>(i) * ldc, ldc);
}

template <typename T>
void gemm_tn_acc(int m, int n, int r, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  for (int p = 0; p < r; ++p) {
    const T* arow = a + static_cast<long>(p) * lda;
    const T* brow = b + static_cast<long>(p) * ldb;
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + static_cast<long>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_acc(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  std::vector<T> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j)
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<long>(j) * ldb + p];
  gemm_acc(m, n, k, a, lda, bt.data(), n, c, ldc);
}

template void gemm_acc<float>(int, int, int, const float*, int, const float*, int, float*, int);
template void gemm_acc<double>(int, int, int, const double*, int, const double*, int, double*, int);
template void gemm_tn_acc<float>(int, int, int, const float*, int, const float*, int, float*, int);
template void gemm_tn_acc<double>(int, int, int, const double*, int, const double*, int, double*,
                                  int);
template void gemm_nt_acc<float>(int, int, int, const float*, int, const float*, int, float*, int);
template void gemm_nt_acc<double>(int, int, int, const double*, int, const double*, int, double*,
                                  int);

}  // namespace tfnet::kernels
