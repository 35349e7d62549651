#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "aligntf/corpus.hpp"
#include "aligntf/model.hpp"
#include "aligntf/optim.hpp"

namespace aligntf {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    AdamConfig adam;
    double lambda_tag = 0.5;
    double grad_clip = 5.0;
    double teacher_force_fraction = 0.5;  // leading share of epochs with gold tags
    std::size_t patience = 0;             // 0 disables early stopping
    std::size_t pretrain_tag_epochs = 0;  // > 0: tag head first, then frozen
    double tag_learning_rate = 1e-2;      // Adam step during tag pretraining
    std::size_t eval_limit = 0;           // validation samples decoded per epoch, 0 = all
    std::uint64_t seed = 1;
};

struct RunConfig {
    std::string preset = "desk";
    ModelConfig model;
    CorpusSpec corpus;
    TrainConfig train;
    std::string data_dir = "data";
    std::string out_dir = "run";

    /// Checks cross-field consistency; throws ConfigError.
    void validate() const;
};

/// "desk" or "paper".
RunConfig preset_config(const std::string& name);

std::string to_json_text(const RunConfig& config);

/// Keys absent from the document keep the preset named in it (default
/// "desk"); unknown keys are rejected.
RunConfig run_config_from_json_text(const std::string& text);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

std::string norm_mode_name(NormMode mode);
NormMode parse_norm_mode(const std::string& name);

}  // namespace aligntf
