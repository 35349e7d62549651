#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aligntf/ops.hpp"
#include "aligntf/params.hpp"

namespace aligntf {

/// Multi-head attention weights. The d x d projections are stored fused:
/// head i owns columns [i * d_n, (i + 1) * d_n) of wq, wk and wv.
template <typename Real>
struct MhaParams {
    std::size_t heads = 1;
    Tensor<Real> wq, wk, wv;  // d x d
    Tensor<Real> wo;          // d x d

    [[nodiscard]] std::size_t model_dim() const { return wq.rows(); }
    [[nodiscard]] std::size_t head_dim() const { return wq.cols() / heads; }

    static MhaParams create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d, std::size_t heads);
};

/// Position-wise two-layer network with a 4d hidden layer.
template <typename Real>
struct FcnParams {
    Tensor<Real> w1, b1;  // d x 4d, 4d
    Tensor<Real> w2, b2;  // 4d x d, d

    static FcnParams create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d);
};

template <typename Real>
struct NormParams {
    Tensor<Real> gain, bias;  // d each

    static NormParams create(ParameterSet<Real>& ps, const std::string& prefix, std::size_t d);
};

/// Boolean admissibility mask, rows = queries, cols = keys.
struct AttentionMask {
    std::size_t rows = 0, cols = 0;
    std::vector<std::uint8_t> allowed;

    static AttentionMask causal(std::size_t t);
    [[nodiscard]] bool at(std::size_t r, std::size_t c) const { return allowed[r * cols + c] != 0; }
};

inline constexpr double kMaskedScore = -1e9;

struct ProbeMatrix {
    std::string name;
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;
};

/// Opt-in sink for attention weights and gate activations.
struct Probe {
    std::vector<ProbeMatrix> attention;
    std::vector<ProbeMatrix> gates;
};

template <typename Real>
ProbeMatrix capture(std::string name, const Tensor<Real>& t) {
    ProbeMatrix m{std::move(name), t.rows(), t.cols(), {}};
    m.values.assign(t.values().begin(), t.values().end());
    return m;
}

template <typename Real>
struct ForwardContext {
    bool training = false;
    Real keep_prob = Real(1);
    Rng* rng = nullptr;  // dropout stream; required when training with keep_prob < 1
    Probe* probe = nullptr;
};

template <typename Real>
struct HeadOutput {
    Tensor<Real> output;   // l_x x d_n
    Tensor<Real> weights;  // l_x x l_y
};

/// Scaled dot-product attention for one head.
template <typename Real>
HeadOutput<Real> attention_head(const Tensor<Real>& x, const Tensor<Real>& y, const MhaParams<Real>& params,
                                std::size_t head, const AttentionMask* mask = nullptr);

template <typename Real>
Tensor<Real> mha(const Tensor<Real>& x, const Tensor<Real>& y, const MhaParams<Real>& params,
                 const AttentionMask* mask = nullptr, Probe* probe = nullptr, std::string_view probe_name = {});

template <typename Real>
Tensor<Real> fcn(const Tensor<Real>& x, const FcnParams<Real>& params);

/// layer_norm(residual + dropout(sub_out)).
template <typename Real>
Tensor<Real> sublayer(const Tensor<Real>& residual, const Tensor<Real>& sub_out, const NormParams<Real>& norm,
                      const ForwardContext<Real>& ctx);

/// Dropout driven by a forward context.
template <typename Real>
Tensor<Real> apply_dropout(const Tensor<Real>& x, const ForwardContext<Real>& ctx);

}  // namespace aligntf
