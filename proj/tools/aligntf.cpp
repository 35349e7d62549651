// aligntf: data generation, training, evaluation, generation and ablation.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>

#include "aligntf/checkpoint.hpp"
#include "aligntf/config.hpp"
#include "aligntf/corpus.hpp"
#include "aligntf/metrics.hpp"
#include "aligntf/trainer.hpp"

namespace fs = std::filesystem;
using namespace aligntf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
    std::string config;
    std::string preset = "desk";
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
    std::optional<std::string> norm;
    std::optional<std::size_t> n_rounds;
    std::optional<std::size_t> epochs;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "RunConfig JSON file");
    cmd->add_option("--preset", f.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--seed", f.seed, "seed override");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--data", f.data, "corpus directory (overrides data_dir)");
}

void add_model_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--norm", f.norm, "plain or mcln")->check(CLI::IsMember({"plain", "mcln"}));
    cmd->add_option("--n-rounds", f.n_rounds, "AHA rounds N");
    cmd->add_option("--epochs", f.epochs, "training epochs");
}

RunConfig resolve(const CommonFlags& f) {
    RunConfig c = f.config.empty() ? preset_config(f.preset) : load_run_config(f.config);
    if (!f.data.empty()) c.data_dir = f.data;
    if (f.norm) c.model.norm = parse_norm_mode(*f.norm);
    if (f.n_rounds) c.model.rounds = *f.n_rounds;
    if (f.epochs) c.train.epochs = *f.epochs;
    return c;
}

int data_threads() {
    if (const char* env = std::getenv("ALIGNTF_DATA_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

struct LoadedData {
    CorpusSplits splits;
    Vocabulary vocab;
};

LoadedData load_data(const fs::path& dir) {
    LoadedData d;
    d.splits.train = read_corpus(dir / "train.jsonl");
    d.splits.val = read_corpus(dir / "val.jsonl");
    d.splits.test = read_corpus(dir / "test.jsonl");
    d.vocab = Vocabulary::load(dir / "vocab.txt");
    return d;
}

const std::vector<Sample>& pick_split(const CorpusSplits& s, const std::string& name) {
    if (name == "train") return s.train;
    if (name == "val") return s.val;
    if (name == "test") return s.test;
    throw ConfigError("unknown split " + name);
}

std::unique_ptr<AlignTransformer<float>> model_from(const Checkpoint& ck) {
    auto model = std::make_unique<AlignTransformer<float>>(resolved_model_config(ck.config, ck.vocab), ck.config.train.seed);
    ck.restore(model->parameters());
    return model;
}

int cmd_gen_data(const CommonFlags& f) {
    RunConfig c = resolve(f);
    if (f.seed) c.corpus.seed = *f.seed;
    const fs::path dir = f.out.empty() ? fs::path(c.data_dir) : fs::path(f.out);
    c.data_dir = dir.string();
    c.validate();
    fs::create_directories(dir);
    const auto samples = generate_corpus(c.corpus, data_threads());
    const auto splits = split_corpus(samples, c.corpus);
    const auto vocab = Vocabulary::build(report_texts(samples));
    write_corpus(dir / "train.jsonl", splits.train);
    write_corpus(dir / "val.jsonl", splits.val);
    write_corpus(dir / "test.jsonl", splits.test);
    vocab.save(dir / "vocab.txt");
    save_run_config(dir / "config.json", c);
    const auto st = corpus_stats(samples);
    std::printf("samples %zu  train %zu  val %zu  test %zu\n", st.samples, splits.train.size(), splits.val.size(),
                splits.test.size());
    std::printf("abnormal_fraction %.4f  vocab %zu\n", st.abnormal_fraction(), vocab.size());
    return 0;
}

int cmd_train(const CommonFlags& f, const std::string& resume) {
    RunConfig c = resolve(f);
    if (f.seed) c.train.seed = *f.seed;
    const fs::path out = f.out.empty() ? fs::path(c.out_dir) : fs::path(f.out);
    c.out_dir = out.string();
    auto data = load_data(c.data_dir);
    Trainer trainer(c, data.vocab, data.splits.train, data.splits.val);
    if (!resume.empty()) trainer.resume(Checkpoint::load(resume));
    trainer.run(out, &std::cout);
    std::printf("best val BLEU-4 %.6f at epoch %llu\n", trainer.progress().best_bleu_4,
                static_cast<unsigned long long>(trainer.progress().best_epoch));
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& split,
             std::size_t beam, const std::string& out) {
    const auto ck = Checkpoint::load(checkpoint);
    const auto data = load_data(data_dir.empty() ? ck.config.data_dir : data_dir);
    if (data.vocab != ck.vocab) throw ConfigError("corpus vocabulary does not match the checkpoint");
    const auto model = model_from(ck);
    const auto report = evaluate_model(*model, ck.vocab, pick_split(data.splits, split), beam);
    std::cout << report.table(split);
    if (!out.empty()) report.save(out);
    return 0;
}

void write_matrix_rows(std::ostream& os, const ProbeMatrix& m, const std::string& prefix) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        os << prefix << '\t' << r;
        for (std::size_t c = 0; c < m.cols; ++c) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "\t%.8f", m.values[r * m.cols + c]);
            os << buf;
        }
        os << '\n';
    }
}

int cmd_generate(const std::string& checkpoint, const std::string& data_dir, const std::string& id,
                 std::size_t beam, const std::string& dump_dir) {
    const auto ck = Checkpoint::load(checkpoint);
    const auto data = load_data(data_dir.empty() ? ck.config.data_dir : data_dir);
    const Sample* sample = nullptr;
    for (const auto* split : {&data.splits.train, &data.splits.val, &data.splits.test})
        for (const auto& s : *split)
            if (s.id == id) sample = &s;
    if (sample == nullptr) throw DataError("no sample with id " + id);
    const auto model = model_from(ck);
    const auto ids = model->generate(sample->image, beam);
    std::cout << ck.vocab.decode(ids) << '\n';
    if (dump_dir.empty()) return 0;

    fs::create_directories(dump_dir);
    Probe enc_probe;
    ForwardContext<float> ctx;
    ctx.probe = &enc_probe;
    const auto enc = model->encode(sample->image, ctx);
    {
        std::ofstream os(fs::path(dump_dir) / "aha_attention.tsv", std::ios::binary);
        os << "# name\tquery_row\tweights over keys\n";
        for (const auto& m : enc_probe.attention) write_matrix_rows(os, m, m.name);
        os << "# selected tags:";
        for (auto t : enc.tags.selected.ids) os << ' ' << t;
        os << '\n';
    }
    Probe dec_probe;
    std::size_t n = ids.size();
    if (n > 1 && ids.back() == kEosId) --n;
    model->next_log_probs(std::span<const std::size_t>(ids.data(), n), enc.grains, &dec_probe);
    {
        std::ofstream os(fs::path(dump_dir) / "decoder_attention.tsv", std::ios::binary);
        os << "# name\tquery_row\tweights over keys\n";
        for (const auto& m : dec_probe.attention) write_matrix_rows(os, m, m.name);
    }
    {
        std::ofstream os(fs::path(dump_dir) / "aea_lambda.tsv", std::ios::binary);
        os << "# name\tposition\tinput_token\tmean_lambda\n";
        for (const auto& m : dec_probe.gates) {
            for (std::size_t r = 0; r < m.rows; ++r) {
                double mean = 0;
                for (std::size_t c = 0; c < m.cols; ++c) mean += m.values[r * m.cols + c];
                mean /= static_cast<double>(m.cols);
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.8f", mean);
                os << m.name << '\t' << r << '\t' << ck.vocab.token(ids[r]) << '\t' << buf << '\n';
            }
        }
    }
    return 0;
}

std::vector<std::size_t> parse_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoul(item));
        } catch (const std::exception&) {
            throw ConfigError("bad N value '" + item + "'");
        }
    }
    return out;
}

int spawn_train(const fs::path& self, const fs::path& config, const fs::path& dir, pid_t& pid) {
    const std::string exe = self.string(), cfg = config.string(), out = dir.string(),
                      log = (dir / "stdout.txt").string();
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
    std::vector<std::string> args{exe, "train", "--config", cfg, "--out", out};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    const int rc = posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    return rc;
}

std::vector<AblationRow> ablate_parallel(const RunConfig& c, const std::vector<std::size_t>& n_values,
                                         const LoadedData& data, const fs::path& out) {
    if (out.empty()) throw ConfigError("--parallel needs an output directory");
    const auto runs = ablation_runs(c, n_values);
    const auto self = fs::read_symlink("/proc/self/exe");
    std::vector<pid_t> pids;
    for (const auto& run : runs) {
        const auto dir = out / run.dir_name;
        fs::create_directories(dir);
        RunConfig rc = run.config;
        rc.data_dir = fs::absolute(c.data_dir).string();
        rc.out_dir = dir.string();
        save_run_config(dir / "run_config.json", rc);
        pid_t pid = 0;
        if (spawn_train(self, dir / "run_config.json", dir, pid) != 0) throw DataError("cannot start " + self.string());
        std::cout << "# " << run.label << ": pid " << pid << ", log " << (dir / "stdout.txt").string() << '\n';
        pids.push_back(pid);
    }
    int worst = 0;
    for (std::size_t i = 0; i < pids.size(); ++i) {
        int status = 0;
        waitpid(pids[i], &status, 0);
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 1;
        if (code != 0) std::cerr << runs[i].label << " exited with " << code << '\n';
        worst = std::max(worst, code);
    }
    if (worst == kExitConfig) throw ConfigError("an ablation run failed");
    if (worst == kExitNumeric) throw NumericError("an ablation run failed");
    if (worst != 0) throw DataError("an ablation run failed");

    std::vector<AblationRow> rows;
    for (const auto& run : runs) {
        const auto dir = out / run.dir_name;
        const auto model = model_from(Checkpoint::load(dir / "best.ckpt"));
        rows.push_back(ablation_row(run, *model, data.vocab, data.splits.test));
        rows.back().report.save(dir / "test_eval.txt");
    }
    return rows;
}

int cmd_ablate(const CommonFlags& f, const std::string& n_values, bool parallel) {
    RunConfig c = resolve(f);
    if (f.seed) c.train.seed = *f.seed;
    const fs::path out = f.out.empty() ? fs::path(c.out_dir) : fs::path(f.out);
    const auto data = load_data(c.data_dir);
    const auto rows = parallel ? ablate_parallel(c, parse_list(n_values), data, out)
                               : run_ablation(c, parse_list(n_values), data.splits, data.vocab, out, &std::cout);
    const auto table = ablation_table(rows);
    std::cout << table;
    if (!out.empty()) {
        std::ofstream(out / "ablation.txt", std::ios::binary) << table;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AlignTransformer report generation on a synthetic corpus"};
    app.require_subcommand(1);

    CommonFlags gen_flags, train_flags, ablate_flags;
    auto* gen = app.add_subcommand("gen-data", "generate corpus splits and vocabulary");
    add_common(gen, gen_flags);

    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, train_flags);
    add_model_flags(train, train_flags);
    std::string resume;
    train->add_option("--resume", resume, "checkpoint to continue from");

    std::string checkpoint, data_dir, split = "test", sample_id, dump_dir, eval_out, n_values = "1,2,3";
    std::size_t beam = 1;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "corpus directory");
    eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--beam", beam, "beam width")->check(CLI::PositiveNumber);
    eval->add_option("--out", eval_out, "write the key-value report here");

    auto* gen_report = app.add_subcommand("generate", "generate one report");
    gen_report->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    gen_report->add_option("--data", data_dir, "corpus directory");
    gen_report->add_option("--sample", sample_id, "sample id")->required();
    gen_report->add_option("--beam", beam, "beam width")->check(CLI::PositiveNumber);
    gen_report->add_option("--dump-attention", dump_dir, "directory for attention and gate dumps");

    auto* ablate = app.add_subcommand("ablate", "baseline vs full model for several N");
    add_common(ablate, ablate_flags);
    add_model_flags(ablate, ablate_flags);
    ablate->add_option("--n-values", n_values, "comma-separated N values");
    bool parallel = false;
    ablate->add_flag("--parallel", parallel, "one train process per configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_flags);
        if (train->parsed()) return cmd_train(train_flags, resume);
        if (eval->parsed()) return cmd_eval(checkpoint, data_dir, split, beam, eval_out);
        if (gen_report->parsed()) return cmd_generate(checkpoint, data_dir, sample_id, beam, dump_dir);
        if (ablate->parsed()) return cmd_ablate(ablate_flags, n_values, parallel);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
