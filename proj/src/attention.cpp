#include "aligntf/attention.hpp"

#include <cmath>

namespace aligntf {

template <typename Real>
MhaParams<Real> MhaParams<Real>::create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d,
                                        std::size_t heads) {
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("attention: model dim " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    MhaParams p;
    p.heads = heads;
    p.wq = ps.create(prefix + ".wq", {d, d}, Init::Xavier);
    p.wk = ps.create(prefix + ".wk", {d, d}, Init::Xavier);
    p.wv = ps.create(prefix + ".wv", {d, d}, Init::Xavier);
    p.wo = ps.create(prefix + ".wo", {d, d}, Init::Xavier);
    return p;
}

template <typename Real>
FcnParams<Real> FcnParams<Real>::create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d) {
    FcnParams p;
    p.w1 = ps.create(prefix + ".w1", {d, 4 * d}, Init::Xavier);
    p.b1 = ps.create(prefix + ".b1", {4 * d}, Init::Zeros);
    p.w2 = ps.create(prefix + ".w2", {4 * d, d}, Init::Xavier);
    p.b2 = ps.create(prefix + ".b2", {d}, Init::Zeros);
    return p;
}

template <typename Real>
NormParams<Real> NormParams<Real>::create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d) {
    return {ps.create(prefix + ".gain", {d}, Init::Ones), ps.create(prefix + ".bias", {d}, Init::Zeros)};
}

AttentionMask AttentionMask::causal(std::size_t t) {
    AttentionMask m{t, t, std::vector<std::uint8_t>(t * t, 0)};
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c <= r; ++c) m.allowed[r * t + c] = 1;
    return m;
}

namespace {

template <typename Real>
Tensor<Real> mask_bias(const AttentionMask& mask, std::size_t rows, std::size_t cols) {
    if (mask.rows != rows || mask.cols != cols) {
        throw DimensionError("attention mask " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                             " does not match scores " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Tensor<Real> bias({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        bool any = false;
        for (std::size_t c = 0; c < cols; ++c) {
            if (mask.at(r, c)) any = true;
            else bias.at(r, c) = static_cast<Real>(kMaskedScore);
        }
        if (!any) throw MaskError("attention mask leaves query row " + std::to_string(r) + " with no key");
    }
    return bias;
}

template <typename Real>
Tensor<Real> attend(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v, std::size_t head_dim,
                    const Tensor<Real>* bias, Tensor<Real>* weights_out) {
    auto scores = scale(matmul_nt(q, k), Real(1) / std::sqrt(static_cast<Real>(head_dim)));
    if (bias != nullptr) scores = add(scores, *bias);
    auto weights = softmax_rows(scores);
    if (weights_out != nullptr) *weights_out = weights;
    return matmul(weights, v);
}

void check_model_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string("attention: ") + what + " has feature dim " + std::to_string(got) +
                             ", parameters expect " + std::to_string(want));
    }
}

}  // namespace

template <typename Real>
HeadOutput<Real> attention_head(const Tensor<Real>& x, const Tensor<Real>& y, const MhaParams<Real>& params,
                                std::size_t head, const AttentionMask* mask) {
    const std::size_t d = params.model_dim(), dn = params.head_dim();
    check_model_dim(x.cols(), d, "query");
    check_model_dim(y.cols(), d, "key/value");
    if (head >= params.heads) throw ConfigError("attention_head: head index out of range");
    const auto q = matmul(x, slice_cols(params.wq, head * dn, dn));
    const auto k = matmul(y, slice_cols(params.wk, head * dn, dn));
    const auto v = matmul(y, slice_cols(params.wv, head * dn, dn));
    std::optional<Tensor<Real>> bias;
    if (mask != nullptr) bias = mask_bias<Real>(*mask, x.rows(), y.rows());
    HeadOutput<Real> out;
    out.output = attend(q, k, v, dn, bias ? &*bias : nullptr, &out.weights);
    return out;
}

template <typename Real>
Tensor<Real> mha(const Tensor<Real>& x, const Tensor<Real>& y, const MhaParams<Real>& params,
                 const AttentionMask* mask, Probe* probe, std::string_view probe_name) {
    const std::size_t d = params.model_dim(), dn = params.head_dim();
    check_model_dim(x.cols(), d, "query");
    check_model_dim(y.cols(), d, "key/value");
    std::optional<Tensor<Real>> bias;
    if (mask != nullptr) bias = mask_bias<Real>(*mask, x.rows(), y.rows());

    const auto q = matmul(x, params.wq);
    const auto k = matmul(y, params.wk);
    const auto v = matmul(y, params.wv);
    std::vector<Tensor<Real>> heads;
    heads.reserve(params.heads);
    for (std::size_t h = 0; h < params.heads; ++h) {
        Tensor<Real> weights;
        Tensor<Real>* sink = probe != nullptr ? &weights : nullptr;
        if (params.heads == 1) {
            heads.push_back(attend(q, k, v, dn, bias ? &*bias : nullptr, sink));
        } else {
            heads.push_back(attend(slice_cols(q, h * dn, dn), slice_cols(k, h * dn, dn), slice_cols(v, h * dn, dn),
                                   dn, bias ? &*bias : nullptr, sink));
        }
        if (probe != nullptr) {
            probe->attention.push_back(capture(std::string(probe_name) + ".head" + std::to_string(h), weights));
        }
    }
    const auto joined = params.heads == 1 ? heads.front() : concat_cols(heads);
    return matmul(joined, params.wo);
}

template <typename Real>
Tensor<Real> fcn(const Tensor<Real>& x, const FcnParams<Real>& params) {
    return add(matmul(relu(add(matmul(x, params.w1), params.b1)), params.w2), params.b2);
}

template <typename Real>
Tensor<Real> apply_dropout(const Tensor<Real>& x, const ForwardContext<Real>& ctx) {
    if (!ctx.training || ctx.keep_prob >= Real(1)) return x;
    if (ctx.rng == nullptr) throw StateError("dropout in training mode needs an RNG stream");
    return dropout(x, ctx.keep_prob, true, *ctx.rng);
}

template <typename Real>
Tensor<Real> sublayer(const Tensor<Real>& residual, const Tensor<Real>& sub_out, const NormParams<Real>& norm,
                      const ForwardContext<Real>& ctx) {
    return layer_norm(add(residual, apply_dropout(sub_out, ctx)), norm.gain, norm.bias);
}

#define ALIGNTF_INSTANTIATE_ATTENTION(T)                                                                        \
    template struct MhaParams<T>;                                                                               \
    template struct FcnParams<T>;                                                                               \
    template struct NormParams<T>;                                                                              \
    template HeadOutput<T> attention_head(const Tensor<T>&, const Tensor<T>&, const MhaParams<T>&, std::size_t, \
                                          const AttentionMask*);                                                \
    template Tensor<T> mha(const Tensor<T>&, const Tensor<T>&, const MhaParams<T>&, const AttentionMask*, Probe*, \
                           std::string_view);                                                                   \
    template Tensor<T> fcn(const Tensor<T>&, const FcnParams<T>&);                                              \
    template Tensor<T> apply_dropout(const Tensor<T>&, const ForwardContext<T>&);                               \
    template Tensor<T> sublayer(const Tensor<T>&, const Tensor<T>&, const NormParams<T>&, const ForwardContext<T>&);

ALIGNTF_INSTANTIATE_ATTENTION(float)
ALIGNTF_INSTANTIATE_ATTENTION(double)

}  // namespace aligntf
