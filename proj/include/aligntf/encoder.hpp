#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aligntf/attention.hpp"

namespace aligntf {

/// Synthetic grid image, row-major [row][col][channel].
struct Image {
    std::size_t grid = 0;
    std::size_t channels = 0;
    std::vector<float> pixels;

    [[nodiscard]] float at(std::size_t r, std::size_t c, std::size_t ch) const {
        return pixels[(r * grid + c) * channels + ch];
    }
    float& at(std::size_t r, std::size_t c, std::size_t ch) { return pixels[(r * grid + c) * channels + ch]; }
    bool operator==(const Image&) const = default;
};

// ---------------------------------------------------------------------------
// Toy visual front-end: linear patch projection plus a learned 2-d position
// embedding (row table + column table).

template <typename Real>
struct VisualEncoderParams {
    std::size_t patch = 2;
    Tensor<Real> projection;  // (patch*patch*channels) x d
    Tensor<Real> bias;        // d
    Tensor<Real> row_position;  // (grid/patch) x d
    Tensor<Real> col_position;  // (grid/patch) x d

    static VisualEncoderParams create(ParameterSet<Real>& ps, std::size_t grid, std::size_t channels,
                                      std::size_t patch, std::size_t d);
};

template <typename Real>
struct VisualFeatures {
    Tensor<Real> matrix;  // N_V x d

    [[nodiscard]] std::size_t region_count() const { return matrix.rows(); }
    [[nodiscard]] std::size_t feature_dim() const { return matrix.cols(); }
};

/// Flattens non-overlapping patches into rows, patch-row-major; each row is
/// [dy][dx][channel]. Throws ConfigError if the grid is not divisible.
template <typename Real>
Tensor<Real> patchify(const Image& image, std::size_t patch);

template <typename Real>
VisualFeatures<Real> toy_visual_encode(const Image& image, const VisualEncoderParams<Real>& params);

// ---------------------------------------------------------------------------
// Disease-tag head.

template <typename Real>
struct TagHeadParams {
    Tensor<Real> weight;      // d x |tags|
    Tensor<Real> bias;        // |tags|
    Tensor<Real> embeddings;  // |tags| x d

    [[nodiscard]] std::size_t tag_count() const { return bias.size(); }
    static TagHeadParams create(ParameterSet<Real>& ps, std::size_t d, std::size_t tags);
};

template <typename Real>
struct DiseaseTagSet {
    Tensor<Real> embeddings;         // N_T x d
    std::vector<std::size_t> ids;    // distinct
    std::vector<Real> scores;        // non-increasing
};

template <typename Real>
struct TagPrediction {
    DiseaseTagSet<Real> selected;
    Tensor<Real> probs;  // 1 x |tags|
};

/// Indices of the n largest scores, ordered by score descending; equal
/// scores resolve to the lower index first.
template <typename Real>
std::vector<std::size_t> select_top_tags(std::span<const Real> scores, std::size_t n);

/// Mean-pool -> linear -> sigmoid, then top-n_t selection. When `forced` is
/// given (teacher forcing) those ids are selected first and the remainder is
/// filled with the best predicted ids; the final rows are ordered by score.
template <typename Real>
TagPrediction<Real> predict_tags(const VisualFeatures<Real>& visual, const TagHeadParams<Real>& params,
                                 std::size_t n_t, const std::vector<std::size_t>* forced = nullptr);

/// Mean binary cross-entropy over all tags against the multi-hot gold set.
template <typename Real>
Tensor<Real> tag_loss(const Tensor<Real>& probs, const std::vector<std::size_t>& gold);

// ---------------------------------------------------------------------------
// Align hierarchical attention.

template <typename Real>
struct AlignRoundParams {
    MhaParams<Real> tag_query_attn;     // MHA(T_{i-1}, V_{i-1})
    NormParams<Real> tag_query_norm;
    FcnParams<Real> visual_fcn;
    NormParams<Real> visual_norm;
    MhaParams<Real> visual_query_attn;  // MHA(V_i, T_{i-1})
    NormParams<Real> visual_query_norm;
    FcnParams<Real> tag_fcn;
    NormParams<Real> tag_norm;
    NormParams<Real> fuse;              // LayerNorm(V_i + T_i)

    static AlignRoundParams create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d,
                                   std::size_t heads);
};

template <typename Real>
struct AhaParams {
    std::vector<AlignRoundParams<Real>> rounds;

    static AhaParams create(ParameterSet<Real>& ps, std::size_t d, std::size_t heads, std::size_t n_rounds);
};

template <typename Real>
struct AlignedPair {
    Tensor<Real> visual;  // V_i, N_T x d
    Tensor<Real> tags;    // T_i, N_T x d
};

/// One round: V_i from tags querying regions, then T_i from the fresh V_i
/// querying the previous tags. Both legs are MHA -> sublayer -> FCN -> sublayer
/// with the residual on the query side.
template <typename Real>
AlignedPair<Real> align_round(const Tensor<Real>& v_prev, const Tensor<Real>& t_prev,
                              const AlignRoundParams<Real>& params, const ForwardContext<Real>& ctx,
                              std::string_view probe_name = "aha");

template <typename Real>
Tensor<Real> fuse_grain(const Tensor<Real>& visual, const Tensor<Real>& tags, const NormParams<Real>& norm);

template <typename Real>
struct MultiGrainedFeatures {
    std::vector<Tensor<Real>> grains;  // each N_T x d, coarse to fine

    [[nodiscard]] std::size_t size() const { return grains.size(); }
};

/// Runs `n_rounds` align rounds (0 = all configured) from (V, T) and returns
/// the fused grain of every round in order.
template <typename Real>
MultiGrainedFeatures<Real> aha_forward(const VisualFeatures<Real>& visual, const DiseaseTagSet<Real>& tags,
                                       const AhaParams<Real>& params, const ForwardContext<Real>& ctx,
                                       std::size_t n_rounds = 0);

}  // namespace aligntf
