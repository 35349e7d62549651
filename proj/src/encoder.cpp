#include "aligntf/encoder.hpp"

#include <algorithm>
#include <numeric>

namespace aligntf {

template <typename Real>
VisualEncoderParams<Real> VisualEncoderParams<Real>::create(ParameterSet<Real>& ps, std::size_t grid,
                                                            std::size_t channels, std::size_t patch, std::size_t d) {
    if (patch == 0 || grid % patch != 0) {
        throw ConfigError("grid " + std::to_string(grid) + " is not divisible by patch " + std::to_string(patch));
    }
    const std::size_t side = grid / patch;
    VisualEncoderParams p;
    p.patch = patch;
    p.projection = ps.create("visual.projection", {patch * patch * channels, d}, Init::Xavier);
    p.bias = ps.create("visual.bias", {d}, Init::Zeros);
    p.row_position = ps.create("visual.row_position", {side, d}, Init::Embedding);
    p.col_position = ps.create("visual.col_position", {side, d}, Init::Embedding);
    return p;
}

template <typename Real>
Tensor<Real> patchify(const Image& image, std::size_t patch) {
    if (patch == 0 || image.grid == 0 || image.grid % patch != 0) {
        throw ConfigError("grid " + std::to_string(image.grid) + " is not divisible by patch " +
                          std::to_string(patch));
    }
    if (image.pixels.size() != image.grid * image.grid * image.channels) {
        throw DataError("image pixel count does not match its grid and channel count");
    }
    const std::size_t side = image.grid / patch;
    const std::size_t width = patch * patch * image.channels;
    Tensor<Real> out({side * side, width});
    for (std::size_t pr = 0; pr < side; ++pr) {
        for (std::size_t pc = 0; pc < side; ++pc) {
            Real* row = out.data() + (pr * side + pc) * width;
            std::size_t j = 0;
            for (std::size_t dy = 0; dy < patch; ++dy)
                for (std::size_t dx = 0; dx < patch; ++dx)
                    for (std::size_t ch = 0; ch < image.channels; ++ch)
                        row[j++] = static_cast<Real>(image.at(pr * patch + dy, pc * patch + dx, ch));
        }
    }
    return out;
}

template <typename Real>
VisualFeatures<Real> toy_visual_encode(const Image& image, const VisualEncoderParams<Real>& params) {
    const auto patches = patchify<Real>(image, params.patch);
    if (patches.cols() != params.projection.rows()) {
        throw ConfigError("image channels do not match the visual encoder");
    }
    const std::size_t side = image.grid / params.patch;
    if (side != params.row_position.rows()) throw ConfigError("image grid does not match the visual encoder");
    std::vector<std::size_t> row_ids, col_ids;
    for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) {
            row_ids.push_back(r);
            col_ids.push_back(c);
        }
    auto projected = add(matmul(patches, params.projection), params.bias);
    auto position = add(embedding_lookup(params.row_position, row_ids), embedding_lookup(params.col_position, col_ids));
    return {add(projected, position)};
}

template <typename Real>
TagHeadParams<Real> TagHeadParams<Real>::create(ParameterSet<Real>& ps, std::size_t d, std::size_t tags) {
    return {ps.create("tags.weight", {d, tags}, Init::Xavier), ps.create("tags.bias", {tags}, Init::Zeros),
            ps.create("tags.embeddings", {tags, d}, Init::Embedding)};
}

template <typename Real>
std::vector<std::size_t> select_top_tags(std::span<const Real> scores, std::size_t n) {
    if (n > scores.size()) {
        throw ConfigError("cannot select " + std::to_string(n) + " tags from a vocabulary of " +
                          std::to_string(scores.size()));
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
    order.resize(n);
    return order;
}

template <typename Real>
TagPrediction<Real> predict_tags(const VisualFeatures<Real>& visual, const TagHeadParams<Real>& params,
                                 std::size_t n_t, const std::vector<std::size_t>* forced) {
    const std::size_t tags = params.tag_count();
    if (n_t == 0 || n_t > tags) {
        throw ConfigError("tags per image (" + std::to_string(n_t) + ") must be in [1, " + std::to_string(tags) + "]");
    }
    auto probs = sigmoid(add(matmul(mean_rows(visual.matrix), params.weight), params.bias));
    const auto p = probs.values();

    std::vector<std::size_t> ids;
    if (forced != nullptr) {
        std::vector<Real> boosted(p.begin(), p.end());
        for (auto id : *forced) {
            if (id >= tags) throw DataError("gold tag id " + std::to_string(id) + " outside tag vocabulary");
            boosted[id] += Real(2);  // any gold tag outranks every predicted one
        }
        ids = select_top_tags<Real>(boosted, n_t);
    } else {
        ids = select_top_tags<Real>(p, n_t);
    }
    std::stable_sort(ids.begin(), ids.end(),
                     [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });

    TagPrediction<Real> out;
    out.probs = probs;
    out.selected.ids = ids;
    for (auto id : ids) out.selected.scores.push_back(p[id]);
    out.selected.embeddings = embedding_lookup(params.embeddings, ids);
    return out;
}

template <typename Real>
Tensor<Real> tag_loss(const Tensor<Real>& probs, const std::vector<std::size_t>& gold) {
    std::vector<Real> target(probs.size(), Real(0));
    for (auto id : gold) {
        if (id >= target.size()) throw DataError("gold tag id " + std::to_string(id) + " outside tag vocabulary");
        target[id] = Real(1);
    }
    return binary_cross_entropy(probs, std::span<const Real>(target));
}

template <typename Real>
AlignRoundParams<Real> AlignRoundParams<Real>::create(ParameterSet<Real>& ps, const std::string& prefix,
                                                      std::size_t d, std::size_t heads) {
    AlignRoundParams p;
    p.tag_query_attn = MhaParams<Real>::create(ps, prefix + ".tag_query_attn", d, heads);
    p.tag_query_norm = NormParams<Real>::create(ps, prefix + ".tag_query_norm", d);
    p.visual_fcn = FcnParams<Real>::create(ps, prefix + ".visual_fcn", d);
    p.visual_norm = NormParams<Real>::create(ps, prefix + ".visual_norm", d);
    p.visual_query_attn = MhaParams<Real>::create(ps, prefix + ".visual_query_attn", d, heads);
    p.visual_query_norm = NormParams<Real>::create(ps, prefix + ".visual_query_norm", d);
    p.tag_fcn = FcnParams<Real>::create(ps, prefix + ".tag_fcn", d);
    p.tag_norm = NormParams<Real>::create(ps, prefix + ".tag_norm", d);
    p.fuse = NormParams<Real>::create(ps, prefix + ".fuse", d);
    return p;
}

template <typename Real>
AhaParams<Real> AhaParams<Real>::create(ParameterSet<Real>& ps, std::size_t d, std::size_t heads,
                                        std::size_t n_rounds) {
    AhaParams p;
    for (std::size_t i = 0; i < n_rounds; ++i) {
        p.rounds.push_back(AlignRoundParams<Real>::create(ps, "aha.round" + std::to_string(i + 1), d, heads));
    }
    return p;
}

template <typename Real>
AlignedPair<Real> align_round(const Tensor<Real>& v_prev, const Tensor<Real>& t_prev,
                              const AlignRoundParams<Real>& params, const ForwardContext<Real>& ctx,
                              std::string_view probe_name) {
    const std::string name(probe_name);
    auto a = sublayer(t_prev, mha(t_prev, v_prev, params.tag_query_attn, nullptr, ctx.probe, name + ".tag_to_region"),
                      params.tag_query_norm, ctx);
    auto v_next = sublayer(a, fcn(a, params.visual_fcn), params.visual_norm, ctx);
    auto b = sublayer(v_next,
                      mha(v_next, t_prev, params.visual_query_attn, nullptr, ctx.probe, name + ".region_to_tag"),
                      params.visual_query_norm, ctx);
    auto t_next = sublayer(b, fcn(b, params.tag_fcn), params.tag_norm, ctx);
    return {v_next, t_next};
}

template <typename Real>
Tensor<Real> fuse_grain(const Tensor<Real>& visual, const Tensor<Real>& tags, const NormParams<Real>& norm) {
    return layer_norm(add(visual, tags), norm.gain, norm.bias);
}

template <typename Real>
MultiGrainedFeatures<Real> aha_forward(const VisualFeatures<Real>& visual, const DiseaseTagSet<Real>& tags,
                                       const AhaParams<Real>& params, const ForwardContext<Real>& ctx,
                                       std::size_t n_rounds) {
    if (n_rounds == 0) n_rounds = params.rounds.size();
    if (n_rounds == 0 || n_rounds > params.rounds.size()) {
        throw ConfigError("aha_forward: " + std::to_string(n_rounds) + " rounds requested, " +
                          std::to_string(params.rounds.size()) + " configured");
    }
    MultiGrainedFeatures<Real> out;
    Tensor<Real> v = visual.matrix;
    Tensor<Real> t = tags.embeddings;
    for (std::size_t i = 0; i < n_rounds; ++i) {
        const auto& rp = params.rounds[i];
        auto next = align_round(v, t, rp, ctx, "aha.round" + std::to_string(i + 1));
        v = next.visual;
        t = next.tags;
        out.grains.push_back(fuse_grain(v, t, rp.fuse));
    }
    return out;
}

#define ALIGNTF_INSTANTIATE_ENCODER(T)                                                                          \
    template struct VisualEncoderParams<T>;                                                                     \
    template struct TagHeadParams<T>;                                                                           \
    template struct AlignRoundParams<T>;                                                                        \
    template struct AhaParams<T>;                                                                               \
    template Tensor<T> patchify<T>(const Image&, std::size_t);                                                  \
    template VisualFeatures<T> toy_visual_encode(const Image&, const VisualEncoderParams<T>&);                  \
    template std::vector<std::size_t> select_top_tags<T>(std::span<const T>, std::size_t);                      \
    template TagPrediction<T> predict_tags(const VisualFeatures<T>&, const TagHeadParams<T>&, std::size_t,      \
                                           const std::vector<std::size_t>*);                                    \
    template Tensor<T> tag_loss(const Tensor<T>&, const std::vector<std::size_t>&);                             \
    template AlignedPair<T> align_round(const Tensor<T>&, const Tensor<T>&, const AlignRoundParams<T>&,         \
                                        const ForwardContext<T>&, std::string_view);                            \
    template Tensor<T> fuse_grain(const Tensor<T>&, const Tensor<T>&, const NormParams<T>&);                    \
    template MultiGrainedFeatures<T> aha_forward(const VisualFeatures<T>&, const DiseaseTagSet<T>&,             \
                                                 const AhaParams<T>&, const ForwardContext<T>&, std::size_t);

ALIGNTF_INSTANTIATE_ENCODER(float)
ALIGNTF_INSTANTIATE_ENCODER(double)

}  // namespace aligntf
