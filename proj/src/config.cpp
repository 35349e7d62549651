#include "aligntf/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace aligntf {

using json = nlohmann::ordered_json;

std::string norm_mode_name(NormMode mode) { return mode == NormMode::Mcln ? "mcln" : "plain"; }

NormMode parse_norm_mode(const std::string& name) {
    if (name == "mcln") return NormMode::Mcln;
    if (name == "plain") return NormMode::Plain;
    throw ConfigError("norm must be plain or mcln, got " + name);
}

void RunConfig::validate() const {
    corpus.validate();
    if (model.grid != corpus.grid || model.channels != corpus.channels || model.patch != corpus.patch) {
        throw ConfigError("model image geometry does not match the corpus");
    }
    if (model.tag_vocab != corpus.tag_vocab) throw ConfigError("model and corpus disagree on the tag vocabulary");
    if (model.d == 0 || model.heads == 0 || model.d % model.heads != 0) {
        throw ConfigError("model dim must be a positive multiple of heads");
    }
    if (model.rounds == 0) throw ConfigError("rounds (N) must be at least 1");
    if (model.layers == 0) throw ConfigError("layers (L) must be at least 1");
    if (model.tags_per_image == 0 || model.tags_per_image > model.tag_vocab) {
        throw ConfigError("tags per image must be in [1, tag vocabulary]");
    }
    if (train.batch_size == 0) throw ConfigError("batch size must be at least 1");
    if (!(train.adam.learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (!(train.tag_learning_rate > 0)) throw ConfigError("tag learning rate must be positive");
    if (!(model.keep_prob > 0 && model.keep_prob <= 1)) throw ConfigError("keep_prob must lie in (0, 1]");
    if (train.teacher_force_fraction < 0 || train.teacher_force_fraction > 1) {
        throw ConfigError("teacher_force_fraction must lie in [0, 1]");
    }
}

RunConfig preset_config(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "desk") {
        c.train.adam.learning_rate = 1e-3;
        c.train.batch_size = 8;
        return c;
    }
    if (name == "paper") {
        c.model.d = 512;
        c.model.heads = 8;
        c.model.rounds = 3;
        c.model.layers = 3;
        c.model.grid = 14;
        c.model.patch = 2;
        c.model.tags_per_image = 10;
        c.corpus.grid = 14;
        c.corpus.patch = 2;
        c.corpus.train_ratio = 0.7;
        c.corpus.val_ratio = 0.1;
        c.corpus.test_ratio = 0.2;
        return c;
    }
    throw ConfigError("unknown preset " + name + " (expected desk or paper)");
}

namespace {

json model_json(const ModelConfig& m) {
    return {{"d", m.d},
            {"heads", m.heads},
            {"rounds", m.rounds},
            {"layers", m.layers},
            {"grid", m.grid},
            {"channels", m.channels},
            {"patch", m.patch},
            {"tags_per_image", m.tags_per_image},
            {"tag_vocab", m.tag_vocab},
            {"report_vocab", m.report_vocab},
            {"max_len", m.max_len},
            {"memory_slots", m.memory_slots},
            {"norm", norm_mode_name(m.norm)},
            {"tie_output", m.tie_output},
            {"bypass_aha", m.bypass_aha},
            {"keep_prob", m.keep_prob}};
}

json corpus_json(const CorpusSpec& c) {
    return {{"samples", c.samples},
            {"grid", c.grid},
            {"channels", c.channels},
            {"patch", c.patch},
            {"abnormal_fraction", c.abnormal_fraction},
            {"max_abnormal", c.max_abnormal},
            {"tag_vocab", c.tag_vocab},
            {"seed", c.seed},
            {"train_ratio", c.train_ratio},
            {"val_ratio", c.val_ratio},
            {"test_ratio", c.test_ratio}};
}

json train_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.adam.learning_rate},
            {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2},
            {"epsilon", t.adam.epsilon},
            {"weight_decay", t.adam.weight_decay},
            {"lambda_tag", t.lambda_tag},
            {"grad_clip", t.grad_clip},
            {"teacher_force_fraction", t.teacher_force_fraction},
            {"patience", t.patience},
            {"pretrain_tag_epochs", t.pretrain_tag_epochs},
            {"tag_learning_rate", t.tag_learning_rate},
            {"eval_limit", t.eval_limit},
            {"seed", t.seed}};
}

void reject_unknown(const json& obj, const json& reference, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!reference.contains(it.key())) throw ConfigError("unknown config key " + where + "." + it.key());
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

std::string to_json_text(const RunConfig& config) {
    json j = {{"preset", config.preset},
              {"model", model_json(config.model)},
              {"corpus", corpus_json(config.corpus)},
              {"train", train_json(config.train)},
              {"data_dir", config.data_dir},
              {"out_dir", config.out_dir}};
    return j.dump(2) + "\n";
}

RunConfig run_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    RunConfig c = preset_config(j.value("preset", std::string("desk")));
    const json reference = json::parse(to_json_text(c));
    reject_unknown(j, reference, "config");
    try {
        read(j, "data_dir", c.data_dir);
        read(j, "out_dir", c.out_dir);
        if (j.contains("model")) {
            const auto& m = j.at("model");
            reject_unknown(m, reference.at("model"), "model");
            read(m, "d", c.model.d);
            read(m, "heads", c.model.heads);
            read(m, "rounds", c.model.rounds);
            read(m, "layers", c.model.layers);
            read(m, "grid", c.model.grid);
            read(m, "channels", c.model.channels);
            read(m, "patch", c.model.patch);
            read(m, "tags_per_image", c.model.tags_per_image);
            read(m, "tag_vocab", c.model.tag_vocab);
            read(m, "report_vocab", c.model.report_vocab);
            read(m, "max_len", c.model.max_len);
            read(m, "memory_slots", c.model.memory_slots);
            if (m.contains("norm")) c.model.norm = parse_norm_mode(m.at("norm").get<std::string>());
            read(m, "tie_output", c.model.tie_output);
            read(m, "bypass_aha", c.model.bypass_aha);
            read(m, "keep_prob", c.model.keep_prob);
        }
        if (j.contains("corpus")) {
            const auto& s = j.at("corpus");
            reject_unknown(s, reference.at("corpus"), "corpus");
            read(s, "samples", c.corpus.samples);
            read(s, "grid", c.corpus.grid);
            read(s, "channels", c.corpus.channels);
            read(s, "patch", c.corpus.patch);
            read(s, "abnormal_fraction", c.corpus.abnormal_fraction);
            read(s, "max_abnormal", c.corpus.max_abnormal);
            read(s, "tag_vocab", c.corpus.tag_vocab);
            read(s, "seed", c.corpus.seed);
            read(s, "train_ratio", c.corpus.train_ratio);
            read(s, "val_ratio", c.corpus.val_ratio);
            read(s, "test_ratio", c.corpus.test_ratio);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            reject_unknown(t, reference.at("train"), "train");
            read(t, "epochs", c.train.epochs);
            read(t, "batch_size", c.train.batch_size);
            read(t, "learning_rate", c.train.adam.learning_rate);
            read(t, "beta1", c.train.adam.beta1);
            read(t, "beta2", c.train.adam.beta2);
            read(t, "epsilon", c.train.adam.epsilon);
            read(t, "weight_decay", c.train.adam.weight_decay);
            read(t, "lambda_tag", c.train.lambda_tag);
            read(t, "grad_clip", c.train.grad_clip);
            read(t, "teacher_force_fraction", c.train.teacher_force_fraction);
            read(t, "patience", c.train.patience);
            read(t, "pretrain_tag_epochs", c.train.pretrain_tag_epochs);
            read(t, "tag_learning_rate", c.train.tag_learning_rate);
            read(t, "eval_limit", c.train.eval_limit);
            read(t, "seed", c.train.seed);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return run_config_from_json_text(ss.str());
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write config " + path.string());
    out << to_json_text(config);
}

}  // namespace aligntf
