#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aligntf/rng.hpp"
#include "aligntf/tensor.hpp"

namespace aligntf {

// Differentiable tensor operations. Each op records a backward closure on the
// thread's active Tape when at least one input requires a gradient; without
// an active tape the ops are plain forward evaluations.
//
// "Row broadcast": the second operand of add/sub/mul may be a single row
// (shape {n} or {1, n}) that is applied to every row of the first.

template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
/// a * b^T
template <typename Real> Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> transpose(const Tensor<Real>& a);

template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> scale(const Tensor<Real>& a, Real s);
/// s * a + shift, elementwise.
template <typename Real> Tensor<Real> affine(const Tensor<Real>& a, Real s, Real shift);

template <typename Real> Tensor<Real> relu(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sigmoid(const Tensor<Real>& x);

/// Row-wise softmax stabilised by the row maximum. Throws NumericError on
/// non-finite input.
template <typename Real> Tensor<Real> softmax_rows(const Tensor<Real>& x);

template <typename Real> Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts);
template <typename Real> Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts);
template <typename Real> Tensor<Real> slice_cols(const Tensor<Real>& a, std::size_t start, std::size_t count);
template <typename Real> Tensor<Real> slice_rows(const Tensor<Real>& a, std::size_t start, std::size_t count);

/// Gathers rows of `table`; gradients scatter-add back into the table.
template <typename Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table, std::span<const std::size_t> ids);

/// Inverted dropout: kept units are scaled by 1/keep_prob during training;
/// identity when !training or keep_prob >= 1.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, Real keep_prob, bool training, Rng& rng);

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row standardisation over the last dimension (no affine part).
template <typename Real> Tensor<Real> normalize_rows(const Tensor<Real>& x, Real eps = Real(kLayerNormEps));

/// normalize_rows(x) * gain + bias. gain/bias are either single rows or full
/// per-row matrices of x's shape.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps = Real(kLayerNormEps));

/// Column means, shape {1, cols}.
template <typename Real> Tensor<Real> mean_rows(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real> Tensor<Real> mean(const Tensor<Real>& x);

/// Sum over rows of -log softmax(logits)[row, target]; rows whose target is
/// `ignore_index` contribute nothing.
template <typename Real>
Tensor<Real> cross_entropy_sum(const Tensor<Real>& logits, std::span<const std::size_t> targets,
                               std::size_t ignore_index);

/// Mean binary cross-entropy of probabilities against 0/1 targets, with
/// probabilities clamped to [eps, 1 - eps].
template <typename Real>
Tensor<Real> binary_cross_entropy(const Tensor<Real>& probs, std::span<const Real> targets, Real eps = Real(1e-7));

}  // namespace aligntf
