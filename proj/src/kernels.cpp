#include "aligntf/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace aligntf::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::OpenMP};
std::atomic<std::size_t> g_threshold{1u << 16};

bool go_parallel(std::size_t work) {
    return g_backend.load(std::memory_order_relaxed) == Backend::OpenMP &&
           work >= g_threshold.load(std::memory_order_relaxed) && max_threads() > 1;
}

// Row kernels shared by both backends; the backends differ only in how the
// outer row loop is scheduled.
template <typename Real>
inline void gemm_nn_row(std::size_t i, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c,
                        bool accumulate) {
    Real* __restrict crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, Real(0));
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
        const Real av = arow[p];
        const Real* __restrict brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

template <typename Real>
inline void gemm_nt_row(std::size_t i, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c,
                        bool accumulate) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
        const Real* brow = b + j * k;
        Real s = 0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] = accumulate ? crow[j] + s : s;
    }
}

template <typename Real>
inline void gemm_tn_row(std::size_t i, std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b,
                        Real* c, bool accumulate) {
    Real* __restrict crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, Real(0));
    for (std::size_t p = 0; p < k; ++p) {
        const Real av = a[p * m + i];
        const Real* __restrict brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

template <typename Real>
inline void softmax_row(std::size_t cols, const Real* x, Real* y) {
    Real mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    Real sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const Real inv = Real(1) / sum;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }
void set_parallel_threshold(std::size_t flops) { g_threshold.store(flops); }
std::size_t parallel_threshold() { return g_threshold.load(); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {
template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) gemm_nn_row(i, n, k, a, b, c, accumulate);
}
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) gemm_nt_row(i, n, k, a, b, c, accumulate);
}
template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) gemm_tn_row(i, m, n, k, a, b, c, accumulate);
}
template <typename Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y) {
    for (std::size_t r = 0; r < rows; ++r) softmax_row(cols, x + r * cols, y + r * cols);
}
}  // namespace serial

namespace omp {
template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) gemm_nn_row(static_cast<std::size_t>(i), n, k, a, b, c, accumulate);
}
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) gemm_nt_row(static_cast<std::size_t>(i), n, k, a, b, c, accumulate);
}
template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i)
        gemm_tn_row(static_cast<std::size_t>(i), m, n, k, a, b, c, accumulate);
}
template <typename Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y) {
    const auto nr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < nr; ++r) {
        const auto off = static_cast<std::size_t>(r) * cols;
        softmax_row(cols, x + off, y + off);
    }
}
}  // namespace omp

template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    if (go_parallel(m * n * k) && m > 1) omp::gemm_nn(m, n, k, a, b, c, accumulate);
    else serial::gemm_nn(m, n, k, a, b, c, accumulate);
}
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    if (go_parallel(m * n * k) && m > 1) omp::gemm_nt(m, n, k, a, b, c, accumulate);
    else serial::gemm_nt(m, n, k, a, b, c, accumulate);
}
template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c, bool accumulate) {
    if (go_parallel(m * n * k) && m > 1) omp::gemm_tn(m, n, k, a, b, c, accumulate);
    else serial::gemm_tn(m, n, k, a, b, c, accumulate);
}
template <typename Real>
void softmax_rows(std::size_t rows, std::size_t cols, const Real* x, Real* y) {
    if (go_parallel(rows * cols * 8) && rows > 1) omp::softmax_rows(rows, cols, x, y);
    else serial::softmax_rows(rows, cols, x, y);
}

#define ALIGNTF_INSTANTIATE_KERNELS(NS, T)                                                                    \
    template void NS::gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);      \
    template void NS::gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);      \
    template void NS::gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);      \
    template void NS::softmax_rows<T>(std::size_t, std::size_t, const T*, T*);

ALIGNTF_INSTANTIATE_KERNELS(serial, float)
ALIGNTF_INSTANTIATE_KERNELS(serial, double)
ALIGNTF_INSTANTIATE_KERNELS(omp, float)
ALIGNTF_INSTANTIATE_KERNELS(omp, double)

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void softmax_rows<float>(std::size_t, std::size_t, const float*, float*);
template void softmax_rows<double>(std::size_t, std::size_t, const double*, double*);

}  // namespace aligntf::kernels
