#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace aligntf {

inline constexpr double kLengthPenaltyAlpha = 0.7;

/// Log-probabilities of the next token given a BOS-prefixed prefix.
using NextLogProbs = std::function<std::vector<double>(std::span<const std::size_t>)>;

struct Hypothesis {
    std::vector<std::size_t> tokens;  // BOS first
    double log_prob = 0.0;           // sum over generated tokens
    bool finished = false;           // ended with EOS

    [[nodiscard]] std::size_t generated() const { return tokens.size() - 1; }
};

/// log_prob / len^alpha, len = generated tokens (BOS excluded).
double normalized_score(double log_prob, std::size_t length, double alpha = kLengthPenaltyAlpha);
double normalized_score(const Hypothesis& h, double alpha = kLengthPenaltyAlpha);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Argmax decoding from [BOS] for at most `max_tokens` generated tokens,
/// stopping after EOS.
Hypothesis greedy_decode(const NextLogProbs& next, std::size_t bos, std::size_t eos, std::size_t max_tokens);

/// Length-normalised beam search. Each step keeps the `width` best
/// extensions by cumulative log-probability (ties: earlier beam, then lower
/// token id); extensions ending in EOS leave the beam. The winner is the best
/// normalised score among finished and surviving hypotheses. Width 1 is
/// exactly greedy_decode. For width > 1 the greedy hypothesis is scored too
/// and kept if it beats the beam result, so the returned score never falls
/// below greedy.
Hypothesis beam_decode(const NextLogProbs& next, std::size_t bos, std::size_t eos, std::size_t width,
                       std::size_t max_tokens, double alpha = kLengthPenaltyAlpha);

/// Sum of next-token log-probabilities along a BOS-prefixed sequence.
double sequence_log_prob(const NextLogProbs& next, std::span<const std::size_t> tokens);

}  // namespace aligntf
