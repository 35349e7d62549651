#include "aligntf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "aligntf/decoder.hpp"
#include "aligntf/errors.hpp"
#include "aligntf/rng.hpp"

namespace aligntf {

using json = nlohmann::json;

void CorpusSpec::validate() const {
    if (samples == 0) throw ConfigError("corpus needs at least one sample");
    if (patch == 0 || grid % patch != 0) throw ConfigError("corpus grid must be divisible by the patch size");
    if (channels == 0) throw ConfigError("corpus needs at least one channel");
    if (!(abnormal_fraction >= 0.0 && abnormal_fraction <= 1.0)) {
        throw ConfigError("abnormal fraction must lie in [0, 1]");
    }
    if (max_abnormal == 0) throw ConfigError("max abnormalities per image must be at least 1");
    if (tag_vocab < max_abnormal) {
        throw ConfigError("tag vocabulary (" + std::to_string(tag_vocab) + ") smaller than max abnormalities (" +
                          std::to_string(max_abnormal) + ")");
    }
    if (tag_vocab < normal_sentences().size()) throw ConfigError("tag vocabulary must cover every report slot");
    const std::size_t side = grid / patch;
    if (side * side < max_abnormal) throw ConfigError("grid has fewer patches than max abnormalities");
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 ||
        std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be non-negative and sum to 1");
    }
}

const std::vector<std::string>& normal_sentences() {
    static const std::vector<std::string> s = {
        "the heart size is normal .",
        "the lungs are clear .",
        "there is no pleural effusion or pneumothorax .",
        "no acute bony abnormality is seen .",
    };
    return s;
}

TagCatalog make_catalog(std::size_t tag_vocab, std::size_t patch, std::size_t channels) {
    static const std::vector<std::string> named = {
        "the cardiac silhouette is enlarged",
        "the mediastinum appears widened",
        "there is calcification of the aortic arch",
        "there is focal consolidation in the right lower lobe",
        "a nodular opacity is present in the left upper lobe",
        "there is streaky atelectasis at the lung bases",
        "there is a moderate left pleural effusion",
        "a small right apical pneumothorax is seen",
        "there is mild pleural thickening",
        "a healing rib fracture is noted",
        "there is mild thoracic scoliosis",
        "degenerative changes are present in the spine",
    };
    TagCatalog cat;
    cat.slots = normal_sentences().size();
    const std::size_t width = patch * patch * channels;
    const Rng texture_root = Rng(0).split("texture");
    for (std::size_t k = 0; k < tag_vocab; ++k) {
        cat.phrases.push_back(k < named.size() ? named[k] : "finding " + std::to_string(k) + " is present");
        std::vector<float> tex(width, 0.0f);
        if (k < width) {
            tex[k] = 0.9f;
            tex[(5 * k + 3) % width] += 0.3f;
        } else {
            Rng r = texture_root.split(k);
            for (auto& x : tex) x = static_cast<float>(r.uniform(0.2, 1.0));
        }
        cat.textures.push_back(std::move(tex));
    }
    return cat;
}

std::string compose_report(std::span<const std::size_t> tags, const TagCatalog& catalog) {
    const auto& normal = normal_sentences();
    std::vector<std::vector<std::size_t>> by_slot(normal.size());
    std::vector<std::size_t> sorted(tags.begin(), tags.end());
    std::sort(sorted.begin(), sorted.end());
    for (auto t : sorted) {
        if (t >= catalog.size()) throw DataError("tag id " + std::to_string(t) + " outside the catalog");
        by_slot[catalog.slot(t)].push_back(t);
    }
    std::string out;
    auto append = [&](const std::string& sentence) {
        if (!out.empty()) out.push_back(' ');
        out += sentence;
    };
    for (std::size_t s = 0; s < normal.size(); ++s) {
        if (by_slot[s].empty()) {
            append(normal[s]);
        } else {
            for (auto t : by_slot[s]) append(catalog.phrases[t] + " .");
        }
    }
    return out;
}

namespace {

float quantize(double x) { return static_cast<float>(std::round(x * 1024.0) / 1024.0); }

std::string sample_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%05zu", i);
    return buf;
}

Sample make_sample(const CorpusSpec& spec, const TagCatalog& catalog, std::size_t index) {
    Rng rng = Rng(spec.seed).split("corpus").split(index);
    Sample s;
    s.id = sample_id(index);
    s.image.grid = spec.grid;
    s.image.channels = spec.channels;
    std::vector<double> pix(spec.grid * spec.grid * spec.channels);

    const bool abnormal = rng.uniform() < spec.abnormal_fraction;
    const std::size_t side = spec.grid / spec.patch;
    std::vector<std::size_t> places;
    if (abnormal) {
        const std::size_t count = 1 + rng.below(spec.max_abnormal);
        while (s.tags.size() < count) {
            const std::size_t t = rng.below(spec.tag_vocab);
            if (std::find(s.tags.begin(), s.tags.end(), t) == s.tags.end()) s.tags.push_back(t);
        }
        while (places.size() < count) {
            const std::size_t p = rng.below(side * side);
            if (std::find(places.begin(), places.end(), p) == places.end()) places.push_back(p);
        }
    }
    for (auto& x : pix) x = rng.uniform(0.0, 0.1);
    for (std::size_t a = 0; a < s.tags.size(); ++a) {
        const auto& tex = catalog.textures[s.tags[a]];
        const std::size_t pr = places[a] / side, pc = places[a] % side;
        std::size_t j = 0;
        for (std::size_t dy = 0; dy < spec.patch; ++dy)
            for (std::size_t dx = 0; dx < spec.patch; ++dx)
                for (std::size_t ch = 0; ch < spec.channels; ++ch) {
                    const std::size_t r = pr * spec.patch + dy, c = pc * spec.patch + dx;
                    pix[(r * spec.grid + c) * spec.channels + ch] += tex[j++];
                }
    }
    s.image.pixels.reserve(pix.size());
    for (double x : pix) s.image.pixels.push_back(quantize(x));
    std::sort(s.tags.begin(), s.tags.end());
    s.report = compose_report(s.tags, catalog);
    return s;
}

}  // namespace

std::vector<Sample> generate_corpus(const CorpusSpec& spec, int threads) {
    spec.validate();
    const auto catalog = make_catalog(spec.tag_vocab, spec.patch, spec.channels);
    std::vector<Sample> out(spec.samples);
    const auto n = static_cast<std::ptrdiff_t>(spec.samples);
#pragma omp parallel for schedule(static) num_threads(std::max(threads, 1))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = make_sample(spec, catalog, static_cast<std::size_t>(i));
    }
    return out;
}

CorpusSplits split_corpus(const std::vector<Sample>& samples, const CorpusSpec& spec) {
    const auto n = static_cast<double>(samples.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * spec.train_ratio));
    const auto n_val = std::min(static_cast<std::size_t>(std::llround(n * spec.val_ratio)), samples.size() - n_train);
    CorpusSplits s;
    s.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train),
                 samples.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), samples.end());
    return s;
}

std::vector<std::string> report_texts(std::span<const Sample> samples) {
    std::vector<std::string> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.report);
    return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Sample> samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file " + path.string());
    for (const auto& s : samples) {
        json j;
        j["id"] = s.id;
        j["grid"] = s.image.grid;
        j["channels"] = s.image.channels;
        j["pixels"] = s.image.pixels;
        j["tags"] = s.tags;
        j["report"] = s.report;
        out << j.dump() << '\n';
    }
}

std::vector<Sample> read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file " + path.string());
    std::vector<Sample> out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            Sample s;
            s.id = j.at("id").get<std::string>();
            s.image.grid = j.at("grid").get<std::size_t>();
            s.image.channels = j.at("channels").get<std::size_t>();
            s.image.pixels = j.at("pixels").get<std::vector<float>>();
            s.tags = j.at("tags").get<std::vector<std::size_t>>();
            s.report = j.at("report").get<std::string>();
            if (s.image.pixels.size() != s.image.grid * s.image.grid * s.image.channels) {
                throw DataError("pixel count does not match grid and channels");
            }
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

CorpusStats corpus_stats(std::span<const Sample> samples) {
    CorpusStats st;
    st.samples = samples.size();
    for (const auto& s : samples) st.abnormal += s.abnormal() ? 1 : 0;
    return st;
}

std::size_t unpadded_length(std::span<const std::size_t> tokens) {
    std::size_t n = tokens.size();
    while (n > 0 && tokens[n - 1] == kPadId) --n;
    return n;
}

std::vector<Batch> epoch_batches(std::span<const Sample> samples, const Vocabulary& vocab, std::size_t batch_size,
                                 std::uint64_t shuffle_seed, std::size_t epoch, std::size_t tag_vocab, bool shuffle) {
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        Rng rng = Rng(shuffle_seed).split("shuffle").split(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        Batch b;
        const std::size_t end = std::min(order.size(), start + batch_size);
        std::size_t longest = 0;
        for (std::size_t i = start; i < end; ++i) {
            const auto& s = samples[order[i]];
            b.indices.push_back(order[i]);
            std::vector<float> hot(tag_vocab, 0.0f);
            for (auto t : s.tags) {
                if (t >= tag_vocab) throw DataError("sample " + s.id + " has tag outside the vocabulary");
                hot[t] = 1.0f;
            }
            b.tag_targets.push_back(std::move(hot));
            b.tokens.push_back(vocab.encode(s.report));
            longest = std::max(longest, b.tokens.back().size());
        }
        for (auto& t : b.tokens) t.resize(longest, kPadId);
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace aligntf
