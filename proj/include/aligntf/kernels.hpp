#pragma once

#include <cstddef>

namespace aligntf::kernels {

// Every kernel exists twice: a serial reference and an OpenMP variant that
// splits the outermost output loop across threads. Each output element is
// produced by one thread with the same summation order as the serial loop,
// so the two are bit-identical for any thread count.

enum class Backend { Serial, OpenMP };

void set_backend(Backend b);
Backend backend();

/// Work (multiply-adds) below which the OpenMP dispatch stays serial.
void set_parallel_threshold(std::size_t flops);
std::size_t parallel_threshold();

int max_threads();

namespace serial {
// C[m x n] (+)= A[m x k] * B[k x n]
template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
// C[m x n] (+)= A[m x k] * B[n x k]^T
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
// C[m x n] (+)= A[k x m]^T * B[k x n]
template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
// Row-wise stable softmax, in place allowed (x == y).
template <typename Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y);
}  // namespace serial

namespace omp {
template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
template <typename Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y);
}  // namespace omp

// Dispatchers: OpenMP when selected and the problem clears the threshold.
template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate);
template <typename Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y);

}  // namespace aligntf::kernels
