#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "aligntf/checkpoint.hpp"
#include "aligntf/config.hpp"
#include "aligntf/corpus.hpp"
#include "aligntf/metrics.hpp"
#include "aligntf/model.hpp"

namespace aligntf {

/// Model config with the report vocabulary size filled in.
ModelConfig resolved_model_config(const RunConfig& config, const Vocabulary& vocab);

/// Decoded reports, one per sample, in eval mode. Runs samples in parallel
/// over frozen parameters; the output does not depend on the thread count.
std::vector<std::string> generate_reports(const AlignTransformer<float>& model, const Vocabulary& vocab,
                                          std::span<const Sample> samples, std::size_t beam_width = 1);

EvalReport evaluate_model(const AlignTransformer<float>& model, const Vocabulary& vocab,
                          std::span<const Sample> samples, std::size_t beam_width = 1);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    double val_loss = 0;
    double val_bleu_4 = 0;
    double val_recall = 0;

    [[nodiscard]] std::string tsv() const;
};

inline constexpr const char* kLogHeader = "epoch\ttrain_loss\tval_loss\tval_bleu4\tval_recall";

class Trainer {
public:
    Trainer(RunConfig config, Vocabulary vocab, std::vector<Sample> train, std::vector<Sample> val);

    /// Continues from a checkpoint: parameters, Adam state, epoch counter and
    /// dropout stream.
    void resume(const Checkpoint& checkpoint);

    /// One pass over the training split; returns the mean batch loss.
    double train_epoch();

    /// Teacher-forced loss in eval mode with predicted tags.
    double validation_loss() const;

    /// Trains until config.train.epochs or early stop. When `out_dir` is
    /// non-empty it receives config.json, train_log.tsv, last.ckpt and
    /// best.ckpt. Log lines are echoed to `echo` if given.
    std::vector<EpochRecord> run(const std::filesystem::path& out_dir, std::ostream* echo = nullptr);

    [[nodiscard]] Checkpoint snapshot() const;

    [[nodiscard]] AlignTransformer<float>& model() { return *model_; }
    [[nodiscard]] const AlignTransformer<float>& model() const { return *model_; }
    [[nodiscard]] const Vocabulary& vocab() const { return vocab_; }
    [[nodiscard]] const RunConfig& config() const { return config_; }
    [[nodiscard]] const TrainProgress& progress() const { return progress_; }

private:
    [[nodiscard]] bool teacher_forcing(std::size_t epoch) const;
    [[nodiscard]] bool two_phase() const;
    [[nodiscard]] bool tag_pretraining(std::size_t epoch) const;

    RunConfig config_;
    Vocabulary vocab_;
    std::vector<Sample> train_, val_;
    std::unique_ptr<AlignTransformer<float>> model_;
    AdamState<float> adam_;
    Rng dropout_;
    TrainProgress progress_;
    std::vector<bool> frozen_;
};

struct AblationRow {
    std::string label;
    std::size_t rounds = 0;  // 0 for the baseline
    std::uint64_t corpus_seed = 0;
    EvalReport report;
};

struct AblationRun {
    std::string label;
    std::string dir_name;
    RunConfig config;
};

/// Baseline (AHA bypassed, raw V as the single grain) followed by one full
/// model per N value; all share the base corpus and training settings. The
/// baseline has no tag head to pretrain, so it drops those epochs and gets
/// the same number of report epochs as the full models.
std::vector<AblationRun> ablation_runs(const RunConfig& base, const std::vector<std::size_t>& n_values);

/// Test-split evaluation of a trained ablation run.
AblationRow ablation_row(const AblationRun& run, const AlignTransformer<float>& model, const Vocabulary& vocab,
                         std::span<const Sample> test);

/// Trains the AHA-bypassed baseline and one full model per N value on the
/// same splits and evaluates each on the test split.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::size_t>& n_values,
                                      const CorpusSplits& splits, const Vocabulary& vocab,
                                      const std::filesystem::path& out_dir, std::ostream* echo = nullptr);

/// Measured rows followed by the published reference rows, which are
/// constants and carry no recall.
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace aligntf
