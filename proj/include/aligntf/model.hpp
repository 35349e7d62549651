#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aligntf/decoder.hpp"
#include "aligntf/decoding.hpp"
#include "aligntf/encoder.hpp"

namespace aligntf {

struct ModelConfig {
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t rounds = 3;  // N
    std::size_t layers = 3;  // L
    std::size_t grid = 8;
    std::size_t channels = 3;
    std::size_t patch = 2;
    std::size_t tags_per_image = 4;  // N_T
    std::size_t tag_vocab = 12;
    std::size_t report_vocab = 0;  // filled from the corpus vocabulary
    std::size_t max_len = 96;
    std::size_t memory_slots = 3;
    NormMode norm = NormMode::Mcln;
    bool tie_output = false;
    bool bypass_aha = false;  // baseline: raw V is the decoder's only grain
    double keep_prob = 0.9;

    [[nodiscard]] std::size_t region_count() const {
        const std::size_t side = patch == 0 ? 0 : grid / patch;
        return side * side;
    }
    [[nodiscard]] std::size_t grain_count() const { return bypass_aha ? 1 : rounds; }
    void validate() const;
};

template <typename Real>
struct Encoding {
    VisualFeatures<Real> visual;
    TagPrediction<Real> tags;
    MultiGrainedFeatures<Real> grains;
};

template <typename Real>
struct LossTerms {
    Tensor<Real> nll_sum;  // report NLL summed over non-PAD targets
    std::size_t tokens = 0;
    Tensor<Real> tag;      // mean BCE; undefined for the baseline
};

template <typename Real>
class AlignTransformer {
public:
    AlignTransformer(const ModelConfig& config, std::uint64_t seed);

    [[nodiscard]] const ModelConfig& config() const { return config_; }
    [[nodiscard]] ParameterSet<Real>& parameters() { return params_; }
    [[nodiscard]] const ParameterSet<Real>& parameters() const { return params_; }

    /// Visual front-end, tag head, then AHA (or the bypass). `forced_tags`
    /// selects gold tags first; `n_rounds` = 0 runs every configured round.
    Encoding<Real> encode(const Image& image, const ForwardContext<Real>& ctx,
                          const std::vector<std::size_t>* forced_tags = nullptr, std::size_t n_rounds = 0) const;

    /// Logits for every position of a BOS-prefixed input.
    Tensor<Real> logits(std::span<const std::size_t> input, const MultiGrainedFeatures<Real>& grains,
                        const ForwardContext<Real>& ctx) const;

    /// Teacher-forced loss terms for one sample. `report` is [BOS .. EOS],
    /// optionally PAD-padded.
    LossTerms<Real> loss_terms(const Image& image, const std::vector<std::size_t>& gold_tags,
                               std::span<const std::size_t> report, const ForwardContext<Real>& ctx,
                               bool teacher_force_tags) const;

    /// Next-token log-probabilities (double) after `prefix`.
    std::vector<double> next_log_probs(std::span<const std::size_t> prefix, const MultiGrainedFeatures<Real>& grains,
                                       Probe* probe = nullptr) const;

    Hypothesis generate_greedy(const MultiGrainedFeatures<Real>& grains, std::size_t max_tokens) const;
    Hypothesis generate_beam(const MultiGrainedFeatures<Real>& grains, std::size_t width,
                             std::size_t max_tokens) const;

    /// Greedy report for an image in eval mode.
    std::vector<std::size_t> generate(const Image& image, std::size_t beam_width = 1,
                                      std::size_t max_tokens = 0) const;

    [[nodiscard]] std::size_t max_generated() const { return config_.max_len - 1; }

private:
    ModelConfig config_;
    ParameterSet<Real> params_;
    VisualEncoderParams<Real> visual_;
    TagHeadParams<Real> tag_head_;
    AhaParams<Real> aha_;
    DecoderParams<Real> decoder_;
};

}  // namespace aligntf
