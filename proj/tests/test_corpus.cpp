#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "aligntf/corpus.hpp"
#include "aligntf/decoder.hpp"
#include "aligntf/errors.hpp"
#include "aligntf/metrics.hpp"

using namespace aligntf;

namespace {

CorpusSpec small_spec(std::size_t n = 200) {
    CorpusSpec s;
    s.samples = n;
    return s;
}

std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "aligntf_corpus_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

bool has_planted_patch(const Sample& s, const std::vector<float>& tex, std::size_t patch) {
    const std::size_t side = s.image.grid / patch;
    for (std::size_t p = 0; p < side * side; ++p) {
        const std::size_t pr = p / side, pc = p % side;
        bool ok = true;
        std::size_t j = 0;
        for (std::size_t dy = 0; dy < patch && ok; ++dy)
            for (std::size_t dx = 0; dx < patch && ok; ++dx)
                for (std::size_t ch = 0; ch < s.image.channels && ok; ++ch) {
                    const double rest = s.image.at(pr * patch + dy, pc * patch + dx, ch) - tex[j++];
                    ok = rest > -1e-3 && rest < 0.1 + 1e-3;
                }
        if (ok) return true;
    }
    return false;
}

}  // namespace

TEST(Corpus, SpecValidation) {
    CorpusSpec s = small_spec();
    s.tag_vocab = 1;
    s.max_abnormal = 2;
    EXPECT_THROW(generate_corpus(s), ConfigError);
    s = small_spec();
    s.abnormal_fraction = 1.5;
    EXPECT_THROW(s.validate(), ConfigError);
    s = small_spec();
    s.train_ratio = 0.9;
    EXPECT_THROW(s.validate(), ConfigError);
    s = small_spec();
    s.grid = 7;
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_NO_THROW(small_spec().validate());
}

TEST(Corpus, AllNormalWhenNoAbnormalFraction) {
    auto spec = small_spec();
    spec.abnormal_fraction = 0.0;
    const auto samples = generate_corpus(spec);
    const auto normal = compose_report({}, make_catalog(spec.tag_vocab, spec.patch, spec.channels));
    for (const auto& s : samples) {
        EXPECT_EQ(s.report, normal);
        EXPECT_TRUE(s.tags.empty());
    }
}

TEST(Corpus, DeterministicAndThreadIndependent) {
    const auto spec = small_spec(300);
    const auto a = generate_corpus(spec), b = generate_corpus(spec), c = generate_corpus(spec, 4);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    const auto p1 = temp_path("a.jsonl"), p2 = temp_path("b.jsonl");
    write_corpus(p1, a);
    write_corpus(p2, c);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    EXPECT_EQ(s1, s2);
    auto other = spec;
    other.seed += 1;
    EXPECT_NE(generate_corpus(other), a);
}

TEST(Corpus, AbnormalFractionWithinBinomialBand) {
    auto spec = small_spec(10000);
    const auto samples = generate_corpus(spec, 4);
    const double frac = corpus_stats(samples).abnormal_fraction();
    EXPECT_NEAR(frac, spec.abnormal_fraction, 0.02);
}

TEST(Corpus, TagReportConsistencyAndPlantedPatches) {
    const auto spec = small_spec(500);
    const auto samples = generate_corpus(spec);
    const auto catalog = make_catalog(spec.tag_vocab, spec.patch, spec.channels);
    for (const auto& s : samples) {
        EXPECT_LE(s.tags.size(), spec.max_abnormal);
        EXPECT_TRUE(std::is_sorted(s.tags.begin(), s.tags.end()));
        EXPECT_EQ(std::set<std::size_t>(s.tags.begin(), s.tags.end()).size(), s.tags.size());
        const auto words = tokenize(s.report);
        for (std::size_t t = 0; t < catalog.size(); ++t) {
            const auto phrase = tokenize(catalog.phrases[t]);
            std::size_t hits = 0;
            for (std::size_t i = 0; i + phrase.size() <= words.size(); ++i)
                hits += std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i));
            const bool gold = std::binary_search(s.tags.begin(), s.tags.end(), t);
            EXPECT_EQ(hits, gold ? 1u : 0u) << s.id << " tag " << t;
            if (gold) { EXPECT_TRUE(has_planted_patch(s, catalog.textures[t], spec.patch)) << s.id << " tag " << t; }
        }
        for (float p : s.image.pixels) EXPECT_EQ(p * 1024.0f, std::round(p * 1024.0f));
    }
}

TEST(Corpus, ReportsKeepNormalSentencesAroundFindings) {
    const auto catalog = make_catalog(12, 2, 3);
    const auto& normal = normal_sentences();
    const std::vector<std::size_t> tags{0, 11};
    const auto r = compose_report(tags, catalog);
    EXPECT_EQ(r, catalog.phrases[0] + " . " + normal[1] + " " + normal[2] + " " + catalog.phrases[11] + " .");
    const std::vector<std::size_t> unknown{12};
    EXPECT_THROW(compose_report(unknown, catalog), DataError);
    const auto big = make_catalog(40, 2, 3);
    EXPECT_EQ(big.size(), 40u);
    EXPECT_EQ(std::set<std::string>(big.phrases.begin(), big.phrases.end()).size(), 40u);
}

TEST(Corpus, SplitsAreDisjointAndCover) {
    const auto spec = CorpusSpec{};
    const auto samples = generate_corpus(spec);
    const auto s = split_corpus(samples, spec);
    EXPECT_EQ(s.train.size(), 512u);
    EXPECT_EQ(s.val.size(), 64u);
    EXPECT_EQ(s.test.size(), 128u);
    std::set<std::string> ids;
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (const auto& x : *part) EXPECT_TRUE(ids.insert(x.id).second);
    EXPECT_EQ(ids.size(), samples.size());
}

TEST(Corpus, SerializationRoundTrip) {
    const auto samples = generate_corpus(small_spec(50));
    const auto path = temp_path("rt.jsonl");
    write_corpus(path, samples);
    EXPECT_EQ(read_corpus(path), samples);

    std::ofstream(temp_path("bad.jsonl")) << "{\"id\": \"x\", \"grid\": 2}\n";
    EXPECT_THROW(read_corpus(temp_path("bad.jsonl")), DataError);
    std::ofstream(temp_path("short.jsonl"))
        << R"({"id":"x","grid":2,"channels":1,"pixels":[0.0,1.0],"tags":[],"report":"a"})" << "\n";
    EXPECT_THROW(read_corpus(temp_path("short.jsonl")), DataError);
    EXPECT_THROW(read_corpus(temp_path("missing.jsonl")), DataError);
}

TEST(Vocab, ContainsTemplateWordsAndRoundTrips) {
    const auto spec = small_spec(300);
    const auto samples = generate_corpus(spec);
    const auto vocab = Vocabulary::build(report_texts(samples));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(vocab.token(i), kReservedTokens[i]);
    EXPECT_EQ(vocab.id("<pad>"), kPadId);
    EXPECT_EQ(vocab.id("<eos>"), kEosId);
    for (const auto& s : normal_sentences())
        for (const auto& w : tokenize(s)) EXPECT_TRUE(vocab.contains(w)) << w;
    for (const auto& s : samples) {
        const auto ids = vocab.encode(s.report);
        EXPECT_EQ(ids.front(), kBosId);
        EXPECT_EQ(ids.back(), kEosId);
        EXPECT_EQ(std::count(ids.begin(), ids.end(), kBosId), 1);
        EXPECT_EQ(std::count(ids.begin(), ids.end(), kEosId), 1);
        EXPECT_EQ(vocab.decode(ids), join_tokens(tokenize(s.report)));
    }
    EXPECT_EQ(vocab.id("zebra"), kUnkId);
}

TEST(Vocab, FrequencyThenLexicographicIds) {
    const std::vector<std::string> texts{"b a c .", "a b .", "a d"};
    const auto v = Vocabulary::build(texts);
    EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<bos>", "<eos>", "<unk>", "a", ".", "b", "c", "d"}));
    EXPECT_EQ(Vocabulary::build(texts), v);
    const auto pruned = Vocabulary::build(texts, 2);
    EXPECT_FALSE(pruned.contains("c"));
    EXPECT_EQ(pruned.encode("c a")[1], kUnkId);
    EXPECT_THROW(Vocabulary::build(std::vector<std::string>{}), DataError);
}

TEST(Vocab, TokenizeAndFileFormat) {
    EXPECT_EQ(tokenize("The Heart, is  normal."), (std::vector<std::string>{"the", "heart", ",", "is", "normal", "."}));
    const auto v = Vocabulary::build(std::vector<std::string>{"x y z ."});
    const auto path = temp_path("vocab.txt");
    v.save(path);
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), v.size());
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(lines[i], kReservedTokens[i]);
    EXPECT_EQ(Vocabulary::load(path), v);
    std::ofstream(temp_path("badvocab.txt")) << "<pad>\n<eos>\n<bos>\n<unk>\n";
    EXPECT_THROW(Vocabulary::load(temp_path("badvocab.txt")), DataError);
    const std::vector<std::size_t> ids{kBosId, 4, kEosId, 5};
    EXPECT_EQ(v.decode(ids), v.token(4));
    EXPECT_THROW((void)v.token(99), DataError);
}

TEST(Batches, Examples) {
    const auto samples = generate_corpus(small_spec(37));
    const auto vocab = Vocabulary::build(report_texts(samples));
    const auto ones = epoch_batches(samples, vocab, 1, 3, 0, 12);
    EXPECT_EQ(ones.size(), samples.size());
    for (std::size_t epoch = 0; epoch < 3; ++epoch) {
        const auto batches = epoch_batches(samples, vocab, 8, 3, epoch, 12);
        EXPECT_EQ(batches.size(), 5u);
        std::multiset<std::size_t> seen;
        for (const auto& b : batches) {
            for (auto i : b.indices) seen.insert(i);
            std::size_t longest = 0;
            for (std::size_t k = 0; k < b.indices.size(); ++k) {
                const auto& tok = b.tokens[k];
                EXPECT_EQ(tok.size(), b.tokens[0].size());
                const auto n = unpadded_length(tok);
                EXPECT_EQ(tok[n - 1], kEosId);
                EXPECT_EQ(std::vector<std::size_t>(tok.begin(), tok.begin() + static_cast<std::ptrdiff_t>(n)),
                          vocab.encode(samples[b.indices[k]].report));
                longest = std::max(longest, n);
                for (std::size_t t = 0; t < 12; ++t)
                    EXPECT_EQ(b.tag_targets[k][t] == 1.0f,
                              std::binary_search(samples[b.indices[k]].tags.begin(),
                                                 samples[b.indices[k]].tags.end(), t));
            }
            EXPECT_EQ(longest, b.tokens[0].size());
        }
        EXPECT_EQ(seen.size(), samples.size());
        EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), samples.size());
    }
    auto index_order = [](const std::vector<Batch>& bs) {
        std::vector<std::size_t> out;
        for (const auto& b : bs) out.insert(out.end(), b.indices.begin(), b.indices.end());
        return out;
    };
    EXPECT_EQ(index_order(epoch_batches(samples, vocab, 8, 3, 1, 12)), index_order(epoch_batches(samples, vocab, 8, 3, 1, 12)));
    EXPECT_NE(index_order(epoch_batches(samples, vocab, 8, 3, 1, 12)), index_order(epoch_batches(samples, vocab, 8, 3, 2, 12)));
    const auto fixed = index_order(epoch_batches(samples, vocab, 8, 3, 1, 12, false));
    for (std::size_t i = 0; i < fixed.size(); ++i) EXPECT_EQ(fixed[i], i);
    EXPECT_THROW(epoch_batches(samples, vocab, 0, 3, 0, 12), ConfigError);
}
