#include "aligntf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace aligntf {

using json = nlohmann::ordered_json;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559, "float32 payload requires IEEE floats");

namespace {

void put_f32(std::string& out, float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

}  // namespace

Checkpoint Checkpoint::capture(const RunConfig& config, const Vocabulary& vocab, const ParameterSet<float>& params,
                               const AdamState<float>& adam, const TrainProgress& progress) {
    Checkpoint c;
    c.config = config;
    c.vocab = vocab;
    c.progress = progress;
    c.adam_step = adam.step;
    const auto& entries = params.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& p = entries[i];
        const auto v = p.tensor.values();
        c.parameters.push_back({p.name, p.tensor.shape(), {v.begin(), v.end()}});
        if (!adam.first_moment.empty()) {
            c.first_moment.push_back({p.name, p.tensor.shape(), adam.first_moment.at(i)});
            c.second_moment.push_back({p.name, p.tensor.shape(), adam.second_moment.at(i)});
        }
    }
    return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    json manifest;
    manifest["config"] = json::parse(to_json_text(config));
    manifest["vocab"] = vocab.tokens();
    manifest["progress"] = {{"epoch", progress.epoch},
                            {"dropout_counter", progress.dropout_counter},
                            {"best_bleu_4", progress.best_bleu_4},
                            {"best_epoch", progress.best_epoch},
                            {"stale_epochs", progress.stale_epochs}};
    manifest["adam_step"] = adam_step;
    std::string payload;
    std::uint64_t offset = 0;
    auto add_group = [&](const char* key, const std::vector<Entry>& group) {
        json arr = json::array();
        for (const auto& e : group) {
            arr.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
            for (float v : e.values) put_f32(payload, v);
            offset += e.values.size();
        }
        manifest[key] = arr;
    };
    add_group("parameters", parameters);
    add_group("adam_first_moment", first_moment);
    add_group("adam_second_moment", second_moment);
    manifest["payload_floats"] = offset;

    const std::string text = manifest.dump();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint " + path.string());
        out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << text.size() << '\n' << text;
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw DataError("failed writing checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != kCheckpointMagic) throw DataError(path.string() + " is not a checkpoint");
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    std::size_t manifest_len = 0;
    in >> manifest_len;
    in.get();
    std::string text(manifest_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(manifest_len));
    if (!in) throw DataError("truncated checkpoint manifest in " + path.string());
    std::stringstream rest;
    rest << in.rdbuf();
    const std::string payload = rest.str();

    Checkpoint c;
    try {
        const auto m = json::parse(text);
        c.config = run_config_from_json_text(m.at("config").dump());
        c.vocab = Vocabulary::from_tokens(m.at("vocab").get<std::vector<std::string>>());
        const auto& p = m.at("progress");
        c.progress.epoch = p.at("epoch").get<std::uint64_t>();
        c.progress.dropout_counter = p.at("dropout_counter").get<std::uint64_t>();
        c.progress.best_bleu_4 = p.at("best_bleu_4").get<double>();
        c.progress.best_epoch = p.at("best_epoch").get<std::uint64_t>();
        c.progress.stale_epochs = p.at("stale_epochs").get<std::uint64_t>();
        c.adam_step = m.at("adam_step").get<std::uint64_t>();
        const auto total = m.at("payload_floats").get<std::uint64_t>();
        if (payload.size() != total * 4) throw DataError("checkpoint payload size does not match its manifest");
        const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
        auto read_group = [&](const char* key, std::vector<Entry>& group) {
            for (const auto& e : m.at(key)) {
                Entry entry{e.at("name").get<std::string>(), e.at("shape").get<Shape>(), {}};
                const auto offset = e.at("offset").get<std::uint64_t>();
                const auto n = shape_numel(entry.shape);
                if (offset + n > total) throw DataError("tensor " + entry.name + " runs past the payload");
                entry.values.resize(n);
                for (std::size_t i = 0; i < n; ++i) entry.values[i] = get_f32(bytes + 4 * (offset + i));
                group.push_back(std::move(entry));
            }
        };
        read_group("parameters", c.parameters);
        read_group("adam_first_moment", c.first_moment);
        read_group("adam_second_moment", c.second_moment);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
    }
    return c;
}

void Checkpoint::restore(ParameterSet<float>& params) const {
    const auto& entries = params.entries();
    if (entries.size() != parameters.size()) {
        throw ConfigError("checkpoint holds " + std::to_string(parameters.size()) + " tensors, model has " +
                          std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = parameters[i];
        if (e.name != entries[i].name || e.shape != entries[i].tensor.shape()) {
            throw ConfigError("checkpoint tensor " + e.name + " " + shape_str(e.shape) + " does not match model tensor " +
                              entries[i].name + " " + shape_str(entries[i].tensor.shape()));
        }
        Tensor<float> t = entries[i].tensor;
        std::copy(e.values.begin(), e.values.end(), t.values().begin());
    }
}

void Checkpoint::restore(AdamState<float>& adam) const {
    adam.step = adam_step;
    adam.first_moment.clear();
    adam.second_moment.clear();
    for (const auto& e : first_moment) adam.first_moment.push_back(e.values);
    for (const auto& e : second_moment) adam.second_moment.push_back(e.values);
}

}  // namespace aligntf
