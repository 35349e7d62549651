#include "aligntf/decoder.hpp"

#include <cmath>

namespace aligntf {

template <typename Real>
Tensor<Real> sinusoid_table(std::size_t max_len, std::size_t d) {
    Tensor<Real> table({max_len, d});
    for (std::size_t p = 0; p < max_len; ++p) {
        for (std::size_t j = 0; j < d; ++j) {
            const double exponent = static_cast<double>(j - j % 2) / static_cast<double>(d);
            const double angle = static_cast<double>(p) / std::pow(10000.0, exponent);
            table.at(p, j) = static_cast<Real>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return table;
}

template <typename Real>
AeaParams<Real> AeaParams<Real>::create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d,
                                        std::size_t heads, std::size_t grains) {
    AeaParams p;
    for (std::size_t i = 0; i < grains; ++i) {
        const std::string g = prefix + ".grain" + std::to_string(i + 1);
        p.attn.push_back(MhaParams<Real>::create(ps, g + ".attn", d, heads));
        p.gate_weight.push_back(ps.create(g + ".gate_weight", {2 * d, d}, Init::Xavier));
        p.gate_bias.push_back(ps.create(g + ".gate_bias", {d}, Init::Zeros));
    }
    return p;
}

template <typename Real>
MclnParams<Real> MclnParams<Real>::create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d,
                                          NormMode mode) {
    MclnParams p;
    p.base = NormParams<Real>::create(ps, prefix, d);
    if (mode == NormMode::Mcln) {
        p.delta_gain = ps.create(prefix + ".delta_gain", {d, d}, Init::Xavier);
        p.delta_bias = ps.create(prefix + ".delta_bias", {d, d}, Init::Xavier);
    }
    return p;
}

template <typename Real>
MemoryParams<Real> MemoryParams<Real>::create(ParameterSet<Real>& ps, std::size_t slots, std::size_t d) {
    if (slots == 0) throw ConfigError("memory needs at least one slot");
    MemoryParams p;
    p.initial = ps.create("memory.initial", {slots, d}, Init::Embedding);
    p.attn = MhaParams<Real>::create(ps, "memory.attn", d, 1);
    p.gate_weight = ps.create("memory.gate_weight", {2 * d, d}, Init::Xavier);
    p.gate_bias = ps.create("memory.gate_bias", {d}, Init::Zeros);
    return p;
}

template <typename Real>
DecoderLayerParams<Real> DecoderLayerParams<Real>::create(ParameterSet<Real>& ps, const std::string& prefix,
                                                          std::size_t d, std::size_t heads, std::size_t grains,
                                                          NormMode mode) {
    DecoderLayerParams p;
    p.self_attn = MhaParams<Real>::create(ps, prefix + ".self_attn", d, heads);
    p.aea = AeaParams<Real>::create(ps, prefix + ".aea", d, heads, grains);
    p.fcn = FcnParams<Real>::create(ps, prefix + ".fcn", d);
    p.norms[0] = MclnParams<Real>::create(ps, prefix + ".norm_self", d, mode);
    p.norms[1] = MclnParams<Real>::create(ps, prefix + ".norm_aea", d, mode);
    p.norms[2] = MclnParams<Real>::create(ps, prefix + ".norm_fcn", d, mode);
    return p;
}

template <typename Real>
DecoderParams<Real> DecoderParams<Real>::create(ParameterSet<Real>& ps, std::size_t vocab, std::size_t d,
                                                std::size_t heads, std::size_t layers, std::size_t grains,
                                                std::size_t max_len, NormMode mode, std::size_t memory_slots,
                                                bool tie_output) {
    if (vocab <= kUnkId) throw ConfigError("report vocabulary must extend past the reserved ids");
    if (layers == 0) throw ConfigError("decoder needs at least one layer");
    DecoderParams p;
    p.mode = mode;
    p.max_len = max_len;
    p.word_embeddings = ps.create("decoder.word_embeddings", {vocab, d}, Init::Embedding);
    p.positions = sinusoid_table<Real>(max_len, d);
    for (std::size_t l = 0; l < layers; ++l) {
        p.layers.push_back(
            DecoderLayerParams<Real>::create(ps, "decoder.layer" + std::to_string(l + 1), d, heads, grains, mode));
    }
    if (mode == NormMode::Mcln) p.memory = MemoryParams<Real>::create(ps, memory_slots, d);
    if (!tie_output) p.out_weight = ps.create("decoder.out_weight", {d, vocab}, Init::Xavier);
    p.out_bias = ps.create("decoder.out_bias", {vocab}, Init::Zeros);
    return p;
}

template <typename Real>
Tensor<Real> embed_inputs(std::span<const std::size_t> tokens, const DecoderParams<Real>& params) {
    if (tokens.empty()) throw SequenceError("empty token sequence");
    if (tokens.size() > params.max_len) {
        throw SequenceError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_len " +
                            std::to_string(params.max_len));
    }
    return add(embedding_lookup(params.word_embeddings, tokens), slice_rows(params.positions, 0, tokens.size()));
}

template <typename Real>
MemoryState<Real> memory_update(const MemoryState<Real>& memory, const Tensor<Real>& prev_embedding,
                                const MemoryParams<Real>& params) {
    const auto& m = memory.matrix;
    auto keys = concat_rows<Real>({prev_embedding, m});
    auto u = mha(m, keys, params.attn);
    auto gate = sigmoid(add(matmul(concat_cols<Real>({m, u}), params.gate_weight), params.gate_bias));
    return {add(mul(gate, m), mul(affine(gate, Real(-1), Real(1)), u))};
}

template <typename Real>
Tensor<Real> pooled_memory_rows(const Tensor<Real>& word_embeddings, const MemoryParams<Real>& params) {
    MemoryState<Real> state{params.initial};
    std::vector<Tensor<Real>> rows;
    rows.reserve(word_embeddings.rows());
    rows.push_back(mean_rows(state.matrix));
    for (std::size_t p = 1; p < word_embeddings.rows(); ++p) {
        state = memory_update(state, slice_rows(word_embeddings, p - 1, 1), params);
        rows.push_back(mean_rows(state.matrix));
    }
    return rows.size() == 1 ? rows.front() : concat_rows(rows);
}

template <typename Real>
Tensor<Real> mcln(const Tensor<Real>& residual, const Tensor<Real>& sub_out, const Tensor<Real>& pooled,
                  const MclnParams<Real>& params, const ForwardContext<Real>& ctx) {
    if (!pooled.defined()) return sublayer(residual, sub_out, params.base, ctx);
    if (!params.delta_gain.defined()) throw ConfigError("memory-conditioned norm built without delta projections");
    if (pooled.rows() != residual.rows()) {
        throw DimensionError("mcln: pooled memory has " + std::to_string(pooled.rows()) + " rows for " +
                             std::to_string(residual.rows()) + " positions");
    }
    auto normalized = normalize_rows(add(residual, apply_dropout(sub_out, ctx)));
    auto gain = add(matmul(pooled, params.delta_gain), params.base.gain);
    auto bias = add(matmul(pooled, params.delta_bias), params.base.bias);
    return add(mul(normalized, gain), bias);
}

template <typename Real>
Tensor<Real> masked_self_attention(const Tensor<Real>& x, const DecoderLayerParams<Real>& layer,
                                   const Tensor<Real>& pooled, const ForwardContext<Real>& ctx,
                                   std::string_view probe_name) {
    const auto mask = AttentionMask::causal(x.rows());
    return mcln(x, mha(x, x, layer.self_attn, &mask, ctx.probe, probe_name), pooled, layer.norms[0], ctx);
}

template <typename Real>
Tensor<Real> aea(const Tensor<Real>& h, const MultiGrainedFeatures<Real>& grains, const AeaParams<Real>& params,
                 Probe* probe, std::string_view probe_name) {
    if (grains.size() != params.grain_count()) {
        throw ConfigError("AEA configured for " + std::to_string(params.grain_count()) + " grains, got " +
                          std::to_string(grains.size()));
    }
    Tensor<Real> total;
    for (std::size_t i = 0; i < grains.size(); ++i) {
        const std::string name = std::string(probe_name) + ".grain" + std::to_string(i + 1);
        auto readout = mha(h, grains.grains[i], params.attn[i], nullptr, probe, name);
        auto gate = sigmoid(add(matmul(concat_cols<Real>({h, readout}), params.gate_weight[i]), params.gate_bias[i]));
        if (probe != nullptr) probe->gates.push_back(capture(name + ".lambda", gate));
        auto term = mul(gate, readout);
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

template <typename Real>
Tensor<Real> decoder_layer(const Tensor<Real>& x, const MultiGrainedFeatures<Real>& grains,
                           const DecoderLayerParams<Real>& layer, const Tensor<Real>& pooled,
                           const ForwardContext<Real>& ctx, std::string_view probe_name) {
    const std::string name(probe_name);
    auto h = masked_self_attention(x, layer, pooled, ctx, name + ".self");
    auto fused = mcln(h, aea(h, grains, layer.aea, ctx.probe, name + ".aea"), pooled, layer.norms[1], ctx);
    return mcln(fused, fcn(fused, layer.fcn), pooled, layer.norms[2], ctx);
}

template <typename Real>
Tensor<Real> decoder_forward(std::span<const std::size_t> tokens, const MultiGrainedFeatures<Real>& grains,
                             const DecoderParams<Real>& params, const ForwardContext<Real>& ctx) {
    if (tokens.empty()) throw SequenceError("decoder input is empty");
    if (tokens.size() > params.max_len) {
        throw SequenceError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_len " +
                            std::to_string(params.max_len));
    }
    auto words = embedding_lookup(params.word_embeddings, tokens);
    auto x = add(words, slice_rows(params.positions, 0, tokens.size()));
    Tensor<Real> pooled;
    if (params.mode == NormMode::Mcln) pooled = pooled_memory_rows(words, *params.memory);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        x = decoder_layer(x, grains, params.layers[l], pooled, ctx, "decoder.layer" + std::to_string(l + 1));
    }
    auto logits = params.out_weight.defined() ? matmul(x, params.out_weight) : matmul_nt(x, params.word_embeddings);
    return add(logits, params.out_bias);
}

std::size_t count_non_pad(std::span<const std::size_t> gold) {
    std::size_t n = 0;
    for (auto id : gold) n += id != kPadId ? 1 : 0;
    return n;
}

template <typename Real>
Tensor<Real> report_loss(const Tensor<Real>& logits, std::span<const std::size_t> gold) {
    if (gold.size() != logits.rows()) {
        throw DimensionError("report_loss: " + std::to_string(gold.size()) + " gold tokens for " +
                             std::to_string(logits.rows()) + " logit rows");
    }
    const std::size_t count = count_non_pad(gold);
    if (count == 0) throw DataError("report_loss: every gold token is padding");
    return scale(cross_entropy_sum(logits, gold, kPadId), Real(1) / static_cast<Real>(count));
}

#define ALIGNTF_INSTANTIATE_DECODER(T)                                                                          \
    template Tensor<T> sinusoid_table<T>(std::size_t, std::size_t);                                             \
    template struct AeaParams<T>;                                                                               \
    template struct MclnParams<T>;                                                                              \
    template struct MemoryParams<T>;                                                                            \
    template struct DecoderLayerParams<T>;                                                                      \
    template struct DecoderParams<T>;                                                                           \
    template Tensor<T> embed_inputs(std::span<const std::size_t>, const DecoderParams<T>&);                     \
    template MemoryState<T> memory_update(const MemoryState<T>&, const Tensor<T>&, const MemoryParams<T>&);     \
    template Tensor<T> pooled_memory_rows(const Tensor<T>&, const MemoryParams<T>&);                            \
    template Tensor<T> mcln(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const MclnParams<T>&,         \
                            const ForwardContext<T>&);                                                          \
    template Tensor<T> masked_self_attention(const Tensor<T>&, const DecoderLayerParams<T>&, const Tensor<T>&,  \
                                             const ForwardContext<T>&, std::string_view);                       \
    template Tensor<T> aea(const Tensor<T>&, const MultiGrainedFeatures<T>&, const AeaParams<T>&, Probe*,       \
                           std::string_view);                                                                   \
    template Tensor<T> decoder_layer(const Tensor<T>&, const MultiGrainedFeatures<T>&,                          \
                                     const DecoderLayerParams<T>&, const Tensor<T>&, const ForwardContext<T>&,  \
                                     std::string_view);                                                         \
    template Tensor<T> decoder_forward(std::span<const std::size_t>, const MultiGrainedFeatures<T>&,            \
                                       const DecoderParams<T>&, const ForwardContext<T>&);                      \
    template Tensor<T> report_loss(const Tensor<T>&, std::span<const std::size_t>);

ALIGNTF_INSTANTIATE_DECODER(float)
ALIGNTF_INSTANTIATE_DECODER(double)

}  // namespace aligntf
