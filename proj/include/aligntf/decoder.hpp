#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aligntf/attention.hpp"
#include "aligntf/encoder.hpp"

namespace aligntf {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kBosId = 1;
inline constexpr std::size_t kEosId = 2;
inline constexpr std::size_t kUnkId = 3;

enum class NormMode { Plain, Mcln };

/// Fixed sinusoidal table: even dims sin(p / 10000^(2i/d)), odd dims cos.
template <typename Real>
Tensor<Real> sinusoid_table(std::size_t max_len, std::size_t d);

/// Per-grain cross attention plus a sigmoid gate over [h; MHA(h, grain)].
template <typename Real>
struct AeaParams {
    std::vector<MhaParams<Real>> attn;
    std::vector<Tensor<Real>> gate_weight;  // 2d x d
    std::vector<Tensor<Real>> gate_bias;    // d

    [[nodiscard]] std::size_t grain_count() const { return attn.size(); }
    static AeaParams create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d, std::size_t heads,
                            std::size_t grains);
};

/// Residual norm whose gain and bias are shifted by linear maps of the
/// pooled memory. With Plain mode the delta maps are absent.
template <typename Real>
struct MclnParams {
    NormParams<Real> base;
    Tensor<Real> delta_gain;  // d x d, undefined in Plain mode
    Tensor<Real> delta_bias;  // d x d, undefined in Plain mode

    static MclnParams create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d, NormMode mode);
};

/// Gated recurrent memory: S slots, updated once per decoding position.
template <typename Real>
struct MemoryParams {
    Tensor<Real> initial;      // S x d learned template
    MhaParams<Real> attn;      // single head
    Tensor<Real> gate_weight;  // 2d x d
    Tensor<Real> gate_bias;    // d

    static MemoryParams create(ParameterSet<Real>& ps, std::size_t slots, std::size_t d);
};

template <typename Real>
struct MemoryState {
    Tensor<Real> matrix;  // S x d
};

template <typename Real>
struct DecoderLayerParams {
    MhaParams<Real> self_attn;
    AeaParams<Real> aea;
    FcnParams<Real> fcn;
    std::array<MclnParams<Real>, 3> norms;  // after self-attn, AEA, FCN

    static DecoderLayerParams create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d,
                                     std::size_t heads, std::size_t grains, NormMode mode);
};

template <typename Real>
struct DecoderParams {
    NormMode mode = NormMode::Mcln;
    std::size_t max_len = 96;
    Tensor<Real> word_embeddings;  // |vocab| x d
    Tensor<Real> positions;        // max_len x d, constant
    std::vector<DecoderLayerParams<Real>> layers;
    std::optional<MemoryParams<Real>> memory;  // present in Mcln mode
    Tensor<Real> out_weight;                   // d x |vocab|; undefined when tied to word_embeddings
    Tensor<Real> out_bias;                     // |vocab|

    [[nodiscard]] std::size_t vocab_size() const { return word_embeddings.rows(); }
    static DecoderParams create(ParameterSet<Real>& ps, std::size_t vocab, std::size_t d, std::size_t heads,
                                std::size_t layers, std::size_t grains, std::size_t max_len, NormMode mode,
                                std::size_t memory_slots, bool tie_output);
};

/// Word embedding plus fixed position embedding.
template <typename Real>
Tensor<Real> embed_inputs(std::span<const std::size_t> tokens, const DecoderParams<Real>& params);

/// M <- g * M + (1 - g) * U with U = attention of M over [prev; M] and
/// g = sigmoid([M; U] W + b).
template <typename Real>
MemoryState<Real> memory_update(const MemoryState<Real>& memory, const Tensor<Real>& prev_embedding,
                                const MemoryParams<Real>& params);

/// Row p = mean over slots of the memory seen at position p; the memory at
/// position p has consumed the word embeddings of positions < p only.
template <typename Real>
Tensor<Real> pooled_memory_rows(const Tensor<Real>& word_embeddings, const MemoryParams<Real>& params);

/// residual + dropout(sub_out), normalised, then scaled by (gain + pooled *
/// delta_gain) and shifted by (bias + pooled * delta_bias). `pooled` may be
/// undefined, which selects the plain sublayer.
template <typename Real>
Tensor<Real> mcln(const Tensor<Real>& residual, const Tensor<Real>& sub_out, const Tensor<Real>& pooled,
                  const MclnParams<Real>& params, const ForwardContext<Real>& ctx);

template <typename Real>
Tensor<Real> masked_self_attention(const Tensor<Real>& x, const DecoderLayerParams<Real>& layer,
                                   const Tensor<Real>& pooled, const ForwardContext<Real>& ctx,
                                   std::string_view probe_name = "decoder.self");

/// sum_i lambda_i * MHA(h, grain_i), lambda_i = sigmoid([h; MHA(h, grain_i)] W_i + b_i).
/// Unwrapped: the caller applies the residual norm.
template <typename Real>
Tensor<Real> aea(const Tensor<Real>& h, const MultiGrainedFeatures<Real>& grains, const AeaParams<Real>& params,
                 Probe* probe = nullptr, std::string_view probe_name = "decoder.aea");

template <typename Real>
Tensor<Real> decoder_layer(const Tensor<Real>& x, const MultiGrainedFeatures<Real>& grains,
                           const DecoderLayerParams<Real>& layer, const Tensor<Real>& pooled,
                           const ForwardContext<Real>& ctx, std::string_view probe_name);

/// Logits (t x |vocab|) for every position of a BOS-prefixed token sequence.
template <typename Real>
Tensor<Real> decoder_forward(std::span<const std::size_t> tokens, const MultiGrainedFeatures<Real>& grains,
                             const DecoderParams<Real>& params, const ForwardContext<Real>& ctx);

/// Mean negative log-likelihood of `gold` (aligned with logits rows); PAD
/// targets are excluded from both the sum and the count.
template <typename Real>
Tensor<Real> report_loss(const Tensor<Real>& logits, std::span<const std::size_t> gold);

std::size_t count_non_pad(std::span<const std::size_t> gold);

}  // namespace aligntf
