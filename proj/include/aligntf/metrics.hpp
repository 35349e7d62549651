#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aligntf/corpus.hpp"

namespace aligntf {

using TokenList = std::vector<std::string>;

/// Corpus-level BLEU-1..max_n with uniform weights and brevity penalty.
/// With `smooth`, an order n >= 2 whose clipped match count is zero counts
/// one match instead. Order 1 is never smoothed.
std::vector<double> bleu(std::span<const TokenList> hyps, std::span<const TokenList> refs, std::size_t max_n = 4,
                         bool smooth = true);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

inline constexpr double kRougeBeta = 1.2;

/// LCS F-measure of one pair; 0 when either side is empty.
double rouge_l_pair(std::span<const std::string> hyp, std::span<const std::string> ref, double beta = kRougeBeta);

/// Mean of rouge_l_pair over the corpus.
double rouge_l(std::span<const TokenList> hyps, std::span<const TokenList> refs, double beta = kRougeBeta);

/// True if `needle` occurs as a contiguous run of `haystack`.
bool contains_phrase(std::span<const std::string> haystack, std::span<const std::string> needle);

/// Fraction of gold finding phrases, over all abnormal samples, found
/// verbatim in the matching generated text. 1.0 when no sample is abnormal.
double abnormality_recall(std::span<const std::string> generated, std::span<const Sample> samples,
                          const TagCatalog& catalog);

struct EvalReport {
    double bleu_1 = 0, bleu_2 = 0, bleu_3 = 0, bleu_4 = 0;
    double rouge_l = 0;
    double abnormality_recall = 0;
    std::size_t samples = 0;

    [[nodiscard]] std::string to_key_values() const;
    static EvalReport from_key_values(const std::string& text);
    void save(const std::filesystem::path& path) const;
    [[nodiscard]] std::string table(const std::string& label = "model") const;
};

EvalReport evaluate_texts(std::span<const std::string> generated, std::span<const Sample> samples,
                          const TagCatalog& catalog);

/// Aligned table with one row per (label, report).
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace aligntf
