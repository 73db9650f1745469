#pragma once

namespace tfnet::kernels {

// Row-major dense kernels. The forward kernel accumulates the K products of
// every output element in ascending k order with fused multiply-add, so a
// row of C gets the same bits no matter how many rows are computed together.
// Streaming (one frame at a time) and batch inference rely on this.

/// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_acc(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc);

/// C[M x N] += A[R x M]^T * B[R x N]  (weight gradients)
template <typename T>
void gemm_tn_acc(int m, int n, int r, const T* a, int lda, const T* b, int ldb, T* c, int ldc);

/// C[M x N] += A[M x K] * B[N x K]^T  (input gradients)
template <typename T>
void gemm_nt_acc(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc);

}  // namespace tfnet::kernels
