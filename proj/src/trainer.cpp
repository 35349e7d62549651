#include "aligntf/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace aligntf {

ModelConfig resolved_model_config(const RunConfig& config, const Vocabulary& vocab) {
    ModelConfig m = config.model;
    m.report_vocab = vocab.size();
    return m;
}

std::vector<std::string> generate_reports(const AlignTransformer<float>& model, const Vocabulary& vocab,
                                          std::span<const Sample> samples, std::size_t beam_width) {
    std::vector<std::string> out(samples.size());
    const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto ids = model.generate(samples[static_cast<std::size_t>(i)].image, beam_width);
        out[static_cast<std::size_t>(i)] = vocab.decode(ids);
    }
    return out;
}

EvalReport evaluate_model(const AlignTransformer<float>& model, const Vocabulary& vocab,
                          std::span<const Sample> samples, std::size_t beam_width) {
    const auto& c = model.config();
    const auto catalog = make_catalog(c.tag_vocab, c.patch, c.channels);
    return evaluate_texts(generate_reports(model, vocab, samples, beam_width), samples, catalog);
}

std::string EpochRecord::tsv() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.6f", epoch, train_loss, val_loss, val_bleu_4, val_recall);
    return buf;
}

Trainer::Trainer(RunConfig config, Vocabulary vocab, std::vector<Sample> train, std::vector<Sample> val)
    : config_(std::move(config)),
      vocab_(std::move(vocab)),
      train_(std::move(train)),
      val_(std::move(val)),
      dropout_(Rng(config_.train.seed).split("dropout")) {
    config_.validate();
    if (train_.empty()) throw DataError("training split is empty");
    config_.model.report_vocab = vocab_.size();
    model_ = std::make_unique<AlignTransformer<float>>(config_.model, config_.train.seed);
    adam_.config = config_.train.adam;
    for (const auto& p : model_->parameters().entries()) {
        frozen_.push_back(two_phase() && (p.name == "tags.weight" || p.name == "tags.bias"));
    }
}

void Trainer::resume(const Checkpoint& checkpoint) {
    if (checkpoint.vocab != vocab_) throw ConfigError("checkpoint vocabulary does not match the corpus vocabulary");
    checkpoint.restore(model_->parameters());
    checkpoint.restore(adam_);
    adam_.config = config_.train.adam;
    progress_ = checkpoint.progress;
    dropout_.set_counter(progress_.dropout_counter);
}

bool Trainer::teacher_forcing(std::size_t epoch) const {
    const std::size_t skip = two_phase() ? std::min(config_.train.pretrain_tag_epochs, config_.train.epochs) : 0;
    if (epoch < skip) return true;
    return static_cast<double>(epoch - skip) <
           config_.train.teacher_force_fraction * static_cast<double>(config_.train.epochs - skip);
}

bool Trainer::two_phase() const { return config_.train.pretrain_tag_epochs > 0 && !config_.model.bypass_aha; }

bool Trainer::tag_pretraining(std::size_t epoch) const {
    return two_phase() && epoch < config_.train.pretrain_tag_epochs;
}

double Trainer::train_epoch() {
    const std::size_t epoch = progress_.epoch;
    const auto& tc = config_.train;
    const bool force_tags = teacher_forcing(epoch);
    const bool pretraining = tag_pretraining(epoch);
    const bool use_tags = !config_.model.bypass_aha;
    const auto batches = epoch_batches(train_, vocab_, tc.batch_size, tc.seed, epoch, config_.model.tag_vocab);
    auto& params = model_->parameters();
    const auto tensors = params.tensors();

    ForwardContext<float> ctx;
    ctx.training = true;
    ctx.keep_prob = static_cast<float>(config_.model.keep_prob);
    ctx.rng = &dropout_;

    double loss_total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const auto& batch = batches[b];
        const auto where = [&] {
            std::string ids;
            for (auto i : batch.indices) ids += (ids.empty() ? "" : ",") + train_[i].id;
            return "epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b) + " (samples " + ids + ")";
        };
        Tape<float> tape;
        Tensor<float> loss;
        try {
            TapeScope<float> scope(tape);
            Tensor<float> nll, tags;
            std::size_t tokens = 0;
            for (std::size_t i = 0; i < batch.indices.size(); ++i) {
                const auto& s = train_[batch.indices[i]];
                auto terms = model_->loss_terms(s.image, s.tags, batch.tokens[i], ctx, force_tags);
                nll = nll.defined() ? add(nll, terms.nll_sum) : terms.nll_sum;
                tokens += terms.tokens;
                if (terms.tag.defined()) tags = tags.defined() ? add(tags, terms.tag) : terms.tag;
            }
            const float inv_batch = 1.0f / static_cast<float>(batch.indices.size());
            if (pretraining) {
                loss = scale(tags, inv_batch);
            } else {
                loss = scale(nll, 1.0f / static_cast<float>(tokens));
                if (use_tags && tc.lambda_tag != 0.0) {
                    loss = add(loss, scale(tags, static_cast<float>(tc.lambda_tag) * inv_batch));
                }
            }
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " in " + where());
        }
        const double value = loss.item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss in " + where());
        params.zero_grad();
        tape.backward(loss);
        clip_grad_norm(tensors, tc.grad_clip);
        adam_.config.learning_rate = pretraining ? tc.tag_learning_rate : tc.adam.learning_rate;
        adam_step(tensors, adam_, two_phase() && !pretraining ? &frozen_ : nullptr);
        loss_total += value;
    }
    progress_.epoch = epoch + 1;
    progress_.dropout_counter = dropout_.counter();
    return loss_total / static_cast<double>(batches.size());
}

double Trainer::validation_loss() const {
    if (val_.empty()) return std::numeric_limits<double>::quiet_NaN();
    const ForwardContext<float> ctx;
    double nll = 0.0, tags = 0.0;
    std::size_t tokens = 0;
    for (const auto& s : val_) {
        const auto ids = vocab_.encode(s.report);
        const auto terms = model_->loss_terms(s.image, s.tags, ids, ctx, false);
        nll += terms.nll_sum.item();
        tokens += terms.tokens;
        if (terms.tag.defined()) tags += terms.tag.item();
    }
    double loss = nll / static_cast<double>(tokens);
    if (!config_.model.bypass_aha) {
        loss += config_.train.lambda_tag * tags / static_cast<double>(val_.size());
    }
    return loss;
}

Checkpoint Trainer::snapshot() const {
    return Checkpoint::capture(config_, vocab_, model_->parameters(), adam_, progress_);
}

std::vector<EpochRecord> Trainer::run(const std::filesystem::path& out_dir, std::ostream* echo) {
    std::ofstream log;
    const bool persist = !out_dir.empty();
    if (persist) {
        std::filesystem::create_directories(out_dir);
        save_run_config(out_dir / "config.json", config_);
        const auto log_path = out_dir / "train_log.tsv";
        if (progress_.epoch == 0) {
            log.open(log_path, std::ios::binary | std::ios::trunc);
            log << kLogHeader << '\n';
        } else {
            log.open(log_path, std::ios::binary | std::ios::app);
        }
        if (!log) throw DataError("cannot write " + log_path.string());
        if (progress_.epoch == 0) snapshot().save(out_dir / "last.ckpt");
    }
    if (echo != nullptr && progress_.epoch == 0) *echo << kLogHeader << '\n';

    std::vector<EpochRecord> records;
    const std::size_t limit = config_.train.eval_limit;
    const std::span<const Sample> eval_set(val_.data(), limit == 0 ? val_.size() : std::min(limit, val_.size()));
    while (progress_.epoch < config_.train.epochs) {
        EpochRecord r;
        r.train_loss = train_epoch();
        r.epoch = progress_.epoch;
        r.val_loss = validation_loss();
        const bool report_phase = !tag_pretraining(r.epoch - 1);
        if (report_phase && !eval_set.empty()) {
            const auto rep = evaluate_model(*model_, vocab_, eval_set);
            r.val_bleu_4 = rep.bleu_4;
            r.val_recall = rep.abnormality_recall;
        } else {
            r.val_bleu_4 = r.val_recall = std::numeric_limits<double>::quiet_NaN();
        }
        const bool improved = report_phase && !eval_set.empty() && r.val_bleu_4 > progress_.best_bleu_4;
        if (improved) {
            progress_.best_bleu_4 = r.val_bleu_4;
            progress_.best_epoch = r.epoch;
            progress_.stale_epochs = 0;
        } else if (report_phase) {
            ++progress_.stale_epochs;
        }
        records.push_back(r);
        if (persist) {
            log << r.tsv() << '\n' << std::flush;
            const auto ck = snapshot();
            ck.save(out_dir / "last.ckpt");
            if (improved || eval_set.empty()) ck.save(out_dir / "best.ckpt");
        }
        if (echo != nullptr) *echo << r.tsv() << '\n' << std::flush;
        if (config_.train.patience > 0 && progress_.stale_epochs >= config_.train.patience) break;
    }
    if (persist && !std::filesystem::exists(out_dir / "best.ckpt")) {
        std::filesystem::copy_file(out_dir / "last.ckpt", out_dir / "best.ckpt");
    }
    return records;
}

std::vector<AblationRun> ablation_runs(const RunConfig& base, const std::vector<std::size_t>& n_values) {
    if (n_values.empty()) throw ConfigError("ablation needs at least one N value");
    std::vector<AblationRun> runs;
    RunConfig baseline = base;
    baseline.model.bypass_aha = true;
    baseline.model.rounds = 1;
    baseline.train.epochs -= std::min(base.train.epochs, base.train.pretrain_tag_epochs);
    runs.push_back({"baseline", "baseline", baseline});
    for (auto n : n_values) {
        RunConfig c = base;
        c.model.bypass_aha = false;
        c.model.rounds = n;
        runs.push_back({"full N=" + std::to_string(n), "n" + std::to_string(n), c});
    }
    return runs;
}

AblationRow ablation_row(const AblationRun& run, const AlignTransformer<float>& model, const Vocabulary& vocab,
                         std::span<const Sample> test) {
    AblationRow row;
    row.label = run.label;
    row.rounds = run.config.model.bypass_aha ? 0 : run.config.model.rounds;
    row.corpus_seed = run.config.corpus.seed;
    row.report = evaluate_model(model, vocab, test);
    return row;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::size_t>& n_values,
                                      const CorpusSplits& splits, const Vocabulary& vocab,
                                      const std::filesystem::path& out_dir, std::ostream* echo) {
    std::vector<AblationRow> rows;
    for (const auto& run : ablation_runs(base, n_values)) {
        const auto dir = out_dir.empty() ? out_dir : out_dir / run.dir_name;
        if (echo != nullptr) *echo << "# " << run.label << '\n';
        Trainer t(run.config, vocab, splits.train, splits.val);
        t.run(dir, echo);
        if (!dir.empty()) Checkpoint::load(dir / "best.ckpt").restore(t.model().parameters());
        rows.push_back(ablation_row(run, t.model(), vocab, splits.test));
        if (!dir.empty()) rows.back().report.save(dir / "test_eval.txt");
    }
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::vector<std::pair<std::string, EvalReport>> table;
    for (const auto& r : rows) table.emplace_back(r.label + " (seed " + std::to_string(r.corpus_seed) + ")", r.report);
    EvalReport base, full;
    base.bleu_1 = 0.442, base.bleu_2 = 0.285, base.bleu_3 = 0.195, base.bleu_4 = 0.138, base.rouge_l = 0.357;
    full.bleu_1 = 0.484, full.bleu_2 = 0.313, full.bleu_3 = 0.225, full.bleu_4 = 0.173, full.rouge_l = 0.379;
    base.abnormality_recall = full.abnormality_recall = -1.0;
    table.emplace_back("published IU-Xray baseline, not reproduced", base);
    table.emplace_back("published IU-Xray full N=3, not reproduced", full);
    return format_table(table);
}

}  // namespace aligntf
