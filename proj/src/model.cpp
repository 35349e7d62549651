#include "aligntf/model.hpp"

#include <cmath>

namespace aligntf {

void ModelConfig::validate() const {
    if (d == 0 || heads == 0 || d % heads != 0) {
        throw ConfigError("model dim " + std::to_string(d) + " must be a positive multiple of heads " +
                          std::to_string(heads));
    }
    if (rounds == 0) throw ConfigError("AHA needs at least one round");
    if (layers == 0) throw ConfigError("decoder needs at least one layer");
    if (patch == 0 || grid % patch != 0) throw ConfigError("grid must be divisible by the patch size");
    if (channels == 0) throw ConfigError("images need at least one channel");
    if (tags_per_image == 0 || tags_per_image > tag_vocab) {
        throw ConfigError("tags per image must be in [1, tag vocabulary]");
    }
    if (report_vocab <= kUnkId) throw ConfigError("report vocabulary is empty");
    if (max_len < 2) throw ConfigError("max_len must allow BOS plus one token");
    if (norm == NormMode::Mcln && memory_slots == 0) throw ConfigError("memory needs at least one slot");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep_prob must lie in (0, 1]");
}

template <typename Real>
AlignTransformer<Real>::AlignTransformer(const ModelConfig& config, std::uint64_t seed)
    : config_(config), params_(seed) {
    config_.validate();
    const auto& c = config_;
    visual_ = VisualEncoderParams<Real>::create(params_, c.grid, c.channels, c.patch, c.d);
    tag_head_ = TagHeadParams<Real>::create(params_, c.d, c.tag_vocab);
    if (!c.bypass_aha) aha_ = AhaParams<Real>::create(params_, c.d, c.heads, c.rounds);
    decoder_ = DecoderParams<Real>::create(params_, c.report_vocab, c.d, c.heads, c.layers, c.grain_count(),
                                           c.max_len, c.norm, c.memory_slots, c.tie_output);
}

template <typename Real>
Encoding<Real> AlignTransformer<Real>::encode(const Image& image, const ForwardContext<Real>& ctx,
                                              const std::vector<std::size_t>* forced_tags,
                                              std::size_t n_rounds) const {
    Encoding<Real> e;
    e.visual = toy_visual_encode(image, visual_);
    if (config_.bypass_aha) {
        e.grains.grains.push_back(e.visual.matrix);
        return e;
    }
    e.tags = predict_tags(e.visual, tag_head_, config_.tags_per_image, forced_tags);
    e.grains = aha_forward(e.visual, e.tags.selected, aha_, ctx, n_rounds);
    return e;
}

template <typename Real>
Tensor<Real> AlignTransformer<Real>::logits(std::span<const std::size_t> input,
                                            const MultiGrainedFeatures<Real>& grains,
                                            const ForwardContext<Real>& ctx) const {
    return decoder_forward(input, grains, decoder_, ctx);
}

template <typename Real>
LossTerms<Real> AlignTransformer<Real>::loss_terms(const Image& image, const std::vector<std::size_t>& gold_tags,
                                                   std::span<const std::size_t> report,
                                                   const ForwardContext<Real>& ctx, bool teacher_force_tags) const {
    std::size_t n = report.size();
    while (n > 0 && report[n - 1] == kPadId) --n;
    if (n < 2) throw DataError("report needs at least BOS and one target token");
    const auto enc = encode(image, ctx, teacher_force_tags ? &gold_tags : nullptr);
    const auto input = report.first(n - 1);
    const auto target = report.subspan(1, n - 1);
    LossTerms<Real> out;
    out.nll_sum = cross_entropy_sum(logits(input, enc.grains, ctx), target, kPadId);
    out.tokens = count_non_pad(target);
    if (!config_.bypass_aha) out.tag = tag_loss(enc.tags.probs, gold_tags);
    return out;
}

template <typename Real>
std::vector<double> AlignTransformer<Real>::next_log_probs(std::span<const std::size_t> prefix,
                                                           const MultiGrainedFeatures<Real>& grains,
                                                           Probe* probe) const {
    ForwardContext<Real> ctx;
    ctx.probe = probe;
    const auto z = logits(prefix, grains, ctx);
    const std::size_t v = z.cols(), last = z.rows() - 1;
    std::vector<double> out(v);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(z.at(last, j)));
    double total = 0.0;
    for (std::size_t j = 0; j < v; ++j) total += std::exp(static_cast<double>(z.at(last, j)) - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < v; ++j) out[j] = static_cast<double>(z.at(last, j)) - lse;
    return out;
}

template <typename Real>
Hypothesis AlignTransformer<Real>::generate_greedy(const MultiGrainedFeatures<Real>& grains,
                                                   std::size_t max_tokens) const {
    return greedy_decode([&](std::span<const std::size_t> p) { return next_log_probs(p, grains); }, kBosId, kEosId,
                         std::min(max_tokens, max_generated()));
}

template <typename Real>
Hypothesis AlignTransformer<Real>::generate_beam(const MultiGrainedFeatures<Real>& grains, std::size_t width,
                                                 std::size_t max_tokens) const {
    return beam_decode([&](std::span<const std::size_t> p) { return next_log_probs(p, grains); }, kBosId, kEosId,
                       width, std::min(max_tokens, max_generated()));
}

template <typename Real>
std::vector<std::size_t> AlignTransformer<Real>::generate(const Image& image, std::size_t beam_width,
                                                          std::size_t max_tokens) const {
    if (max_tokens == 0) max_tokens = max_generated();
    const auto enc = encode(image, ForwardContext<Real>{});
    const auto h = beam_width <= 1 ? generate_greedy(enc.grains, max_tokens)
                                   : generate_beam(enc.grains, beam_width, max_tokens);
    return h.tokens;
}

template class AlignTransformer<float>;
template class AlignTransformer<double>;

}  // namespace aligntf
