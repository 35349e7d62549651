#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aligntf/encoder.hpp"
#include "aligntf/vocab.hpp"

namespace aligntf {

struct CorpusSpec {
    std::size_t samples = 704;
    std::size_t grid = 8;
    std::size_t channels = 3;
    std::size_t patch = 2;
    double abnormal_fraction = 0.3;
    std::size_t max_abnormal = 2;
    std::size_t tag_vocab = 12;
    std::uint64_t seed = 7;
    double train_ratio = 8.0 / 11.0;
    double val_ratio = 1.0 / 11.0;
    double test_ratio = 2.0 / 11.0;

    void validate() const;
};

struct Sample {
    std::string id;
    Image image;
    std::vector<std::size_t> tags;  // ascending
    std::string report;

    [[nodiscard]] bool abnormal() const { return !tags.empty(); }
    bool operator==(const Sample&) const = default;
};

/// Finding phrases and planted patch textures, a pure function of the tag
/// count and patch geometry.
struct TagCatalog {
    std::vector<std::string> phrases;
    std::vector<std::vector<float>> textures;  // patch*patch*channels each, [dy][dx][ch]
    std::size_t slots = 4;

    [[nodiscard]] std::size_t size() const { return phrases.size(); }
    /// Normal sentence a tag's finding replaces.
    [[nodiscard]] std::size_t slot(std::size_t tag) const { return tag * slots / size(); }
};

TagCatalog make_catalog(std::size_t tag_vocab, std::size_t patch, std::size_t channels);

/// One per catalog slot, in report order.
const std::vector<std::string>& normal_sentences();

/// Normal sentences with each slot holding gold findings replaced by those
/// findings in tag-id order.
std::string compose_report(std::span<const std::size_t> tags, const TagCatalog& catalog);

/// Deterministic in spec.seed. Sample i uses its own stream, so `threads`
/// never changes the output.
std::vector<Sample> generate_corpus(const CorpusSpec& spec, int threads = 1);

struct CorpusSplits {
    std::vector<Sample> train, val, test;
};

/// Contiguous split by the CorpusSpec ratios; test takes the remainder.
CorpusSplits split_corpus(const std::vector<Sample>& samples, const CorpusSpec& spec);

std::vector<std::string> report_texts(std::span<const Sample> samples);

/// JSON Lines: {"id", "grid", "channels", "pixels", "tags", "report"}.
void write_corpus(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> read_corpus(const std::filesystem::path& path);

struct CorpusStats {
    std::size_t samples = 0;
    std::size_t abnormal = 0;
    [[nodiscard]] double abnormal_fraction() const {
        return samples == 0 ? 0.0 : static_cast<double>(abnormal) / static_cast<double>(samples);
    }
};

CorpusStats corpus_stats(std::span<const Sample> samples);

struct Batch {
    std::vector<std::size_t> indices;                // into the sample list
    std::vector<std::vector<float>> tag_targets;     // multi-hot, |tags| each
    std::vector<std::vector<std::size_t>> tokens;    // [BOS .. EOS] padded with PAD to the batch max
};

/// Batches of one epoch. The order is a permutation drawn from
/// (shuffle_seed, epoch); shuffle=false keeps corpus order.
std::vector<Batch> epoch_batches(std::span<const Sample> samples, const Vocabulary& vocab, std::size_t batch_size,
                                 std::uint64_t shuffle_seed, std::size_t epoch, std::size_t tag_vocab,
                                 bool shuffle = true);

/// Length of a padded sequence without its trailing PAD run.
std::size_t unpadded_length(std::span<const std::size_t> tokens);

}  // namespace aligntf
