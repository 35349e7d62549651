#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aligntf/config.hpp"
#include "aligntf/optim.hpp"
#include "aligntf/params.hpp"
#include "aligntf/vocab.hpp"

namespace aligntf {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointMagic = "ALIGNTF-CKPT";

struct TrainProgress {
    std::uint64_t epoch = 0;           // completed epochs
    std::uint64_t dropout_counter = 0;  // position in the dropout stream
    double best_bleu_4 = -1.0;
    std::uint64_t best_epoch = 0;
    std::uint64_t stale_epochs = 0;
};

/// Layout:
///   line 1  "ALIGNTF-CKPT <version>"
///   line 2  manifest length in bytes
///   JSON manifest: config, vocabulary, progress, and for every tensor its
///   name, shape and element offset into the payload
///   payload: little-endian IEEE-754 float32, parameters then Adam moments
struct Checkpoint {
    RunConfig config;
    Vocabulary vocab;
    TrainProgress progress;
    std::uint64_t adam_step = 0;

    struct Entry {
        std::string name;
        Shape shape;
        std::vector<float> values;
    };
    std::vector<Entry> parameters;
    std::vector<Entry> first_moment;   // empty before the first update
    std::vector<Entry> second_moment;

    static Checkpoint capture(const RunConfig& config, const Vocabulary& vocab, const ParameterSet<float>& params,
                              const AdamState<float>& adam, const TrainProgress& progress);

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    /// Copies values into a parameter set built from the same config.
    void restore(ParameterSet<float>& params) const;
    void restore(AdamState<float>& adam) const;
};

}  // namespace aligntf
