#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "aligntf/errors.hpp"
#include "aligntf/metrics.hpp"
#include "aligntf/rng.hpp"

using namespace aligntf;

namespace {

std::vector<TokenList> one(const std::string& text) { return {tokenize(text)}; }

std::size_t lcs_brute(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() || b.empty()) return 0;
    if (a.front() == b.front()) return 1 + lcs_brute(a.subspan(1), b.subspan(1));
    return std::max(lcs_brute(a.subspan(1), b), lcs_brute(a, b.subspan(1)));
}

TokenList random_tokens(Rng& rng, std::size_t max_len, std::size_t alphabet) {
    TokenList t(rng.below(max_len + 1));
    for (auto& w : t) w = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
    return t;
}

std::vector<Sample> abnormal_samples(const TagCatalog& cat) {
    std::vector<Sample> s(2);
    s[0].tags = {0, 5};
    s[1].tags = {7};
    s.push_back(Sample{});  // normal samples do not count
    for (auto& x : s) x.report = compose_report(x.tags, cat);
    return s;
}

}  // namespace

TEST(Bleu, HandCaseBrevityPenalty) {
    const auto b = bleu(one("the cat sat"), one("the cat sat on the mat"));
    EXPECT_NEAR(b[0], std::exp(-1.0), 1e-6);
}

TEST(Bleu, IdentityScoresOneExactly) {
    const std::vector<TokenList> refs{tokenize("the heart is normal ."), tokenize("a b c d e f")};
    const auto b = bleu(refs, refs);
    for (double x : b) EXPECT_EQ(x, 1.0);
}

TEST(Bleu, DisjointVocabulariesScoreZero) {
    const auto b = bleu(one("x y z w"), one("a b c d"));
    EXPECT_EQ(b[0], 0.0);
    EXPECT_EQ(bleu(one("x y z w"), one("a b c d"), 4, false)[3], 0.0);
}

TEST(Bleu, SmoothingOnlyAboveOrderOne) {
    // Unigrams 3/4 match, no bigram matches: smoothed p2 = 1/3.
    const auto b = bleu(one("a c e z"), one("a b c d e f g h"), 2, true);
    const double bp = std::exp(1.0 - 8.0 / 4.0);
    EXPECT_NEAR(b[0], bp * 0.75, 1e-12);
    EXPECT_NEAR(b[1], bp * std::sqrt(0.75 * (1.0 / 3.0)), 1e-12);
    EXPECT_EQ(bleu(one("a c e z"), one("a b c d e f g h"), 2, false)[1], 0.0);
}

TEST(Bleu, ClippingAndCorpusPooling) {
    const auto b = bleu(one("the the the the"), one("the cat"), 1);
    EXPECT_NEAR(b[0], 0.25, 1e-12);  // clipped to 1 match of 4, no brevity penalty
    std::vector<TokenList> h{tokenize("a b"), tokenize("c d e f")}, r{tokenize("a x"), tokenize("c d e f")};
    EXPECT_NEAR(bleu(h, r, 1)[0], 5.0 / 6.0, 1e-12);
}

TEST(Bleu, InputErrors) {
    EXPECT_THROW(bleu(std::vector<TokenList>{}, std::vector<TokenList>{}), DataError);
    const std::vector<TokenList> two{tokenize("a"), tokenize("b")};
    EXPECT_THROW(bleu(one("a"), two), DataError);
}

TEST(Bleu, NonIncreasingInOrderForRepeatFreeHypotheses) {
    // Distinct hypothesis tokens make clipping inert; each matched (n+1)-gram
    // then needs two adjacent matched n-grams, so p_{n+1} <= p_n.
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto ref = random_tokens(rng, 10, 8);
        TokenList pool{"a", "b", "c", "d", "e", "f", "g", "h"};
        for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
        const TokenList hyp(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(1 + rng.below(8)));
        const auto b = bleu(std::vector<TokenList>{hyp}, std::vector<TokenList>{ref.empty() ? hyp : ref}, 4, false);
        for (std::size_t k = 1; k < 4; ++k) EXPECT_LE(b[k], b[k - 1] + 1e-12) << "trial " << trial;
        for (double x : b) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, 1.0);
        }
    }
}

TEST(Bleu, ClippingCanRaiseHigherOrders) {
    // Repeated bigram "c d" is clipped to one match (p2 = 2/4) while both
    // trigrams match (p3 = 2/3).
    const auto b = bleu(one("c c d c d"), one("d c d c"), 3, false);
    EXPECT_NEAR(b[1], std::sqrt(0.8 * 0.5), 1e-12);
    EXPECT_NEAR(b[2], std::cbrt(0.8 * 0.5 * 2.0 / 3.0), 1e-12);
    EXPECT_GT(b[2], b[1]);
}

TEST(Bleu, CorpusPoolingCanRaiseHigherOrders) {
    // A one-token hypothesis adds a unigram miss but no bigrams, so pooled
    // p2 (1/1) exceeds pooled p1 (2/3).
    const std::vector<TokenList> h{tokenize("x"), tokenize("a b")}, r{tokenize("q"), tokenize("a b")};
    const auto b = bleu(h, r, 2, false);
    EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(b[1], std::sqrt(2.0 / 3.0), 1e-12);
    EXPECT_GT(b[1], b[0]);
}

TEST(Rouge, HandCases) {
    EXPECT_NEAR(rouge_l(one("a b c"), one("a x c")), 0.6667, 1e-4);
    EXPECT_EQ(rouge_l(one("a b c"), one("a b c")), 1.0);
    EXPECT_EQ(rouge_l(one("a b c"), one("x y z")), 0.0);
    EXPECT_EQ(rouge_l_pair(TokenList{}, tokenize("a")), 0.0);
    // P = 1, R = 1/2: F = (1 + b^2) P R / (R + b^2 P).
    const double b2 = kRougeBeta * kRougeBeta;
    EXPECT_NEAR(rouge_l_pair(tokenize("a b"), tokenize("a q b r")), (1 + b2) * 0.5 / (0.5 + b2), 1e-12);
}

TEST(Rouge, LcsMatchesBruteForce) {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_tokens(rng, 8, 3), b = random_tokens(rng, 8, 3);
        EXPECT_EQ(lcs_length(a, b), lcs_brute(a, b)) << "trial " << trial;
    }
}

TEST(Recall, ExamplesAndHalfCoverage) {
    const auto cat = make_catalog(12, 2, 3);
    const auto samples = abnormal_samples(cat);
    const auto gold = report_texts(samples);
    EXPECT_EQ(abnormality_recall(gold, samples, cat), 1.0);
    const std::vector<std::string> normal(3, compose_report({}, cat));
    EXPECT_EQ(abnormality_recall(normal, samples, cat), 0.0);

    // Four gold phrases in total once a second finding is added to sample 1;
    // mention exactly two of them.
    auto four = samples;
    four[1].tags = {3, 7};
    four[1].report = compose_report(four[1].tags, cat);
    const std::vector<std::string> half{compose_report(std::vector<std::size_t>{5}, cat),
                                        compose_report(std::vector<std::size_t>{3}, cat), ""};
    EXPECT_EQ(abnormality_recall(half, four, cat), 0.5);

    const std::vector<Sample> none(2);
    EXPECT_EQ(abnormality_recall(std::vector<std::string>(2), none, cat), 1.0);
    EXPECT_THROW(abnormality_recall(normal, none, cat), DataError);
}

TEST(Metrics, OrderInvariance) {
    const auto cat = make_catalog(12, 2, 3);
    auto samples = abnormal_samples(cat);
    const std::vector<std::string> gen{compose_report(std::vector<std::size_t>{0}, cat), "the lungs are clear .",
                                       compose_report({}, cat)};
    const auto a = evaluate_texts(gen, samples, cat);
    std::vector<std::string> gen_r(gen.rbegin(), gen.rend());
    std::vector<Sample> samples_r(samples.rbegin(), samples.rend());
    const auto b = evaluate_texts(gen_r, samples_r, cat);
    EXPECT_NEAR(a.bleu_4, b.bleu_4, 1e-12);
    EXPECT_NEAR(a.rouge_l, b.rouge_l, 1e-12);
    EXPECT_NEAR(a.abnormality_recall, b.abnormality_recall, 1e-12);
    EXPECT_EQ(a.samples, 3u);
}

TEST(Metrics, ReportSerialization) {
    EvalReport r{0.5, 0.4, 0.3, 0.2, 0.45, 0.75, 12};
    const auto back = EvalReport::from_key_values(r.to_key_values());
    EXPECT_NEAR(back.bleu_3, 0.3, 1e-6);
    EXPECT_NEAR(back.abnormality_recall, 0.75, 1e-6);
    EXPECT_EQ(back.samples, 12u);
    const auto table = format_table({{"full", r}});
    EXPECT_NE(table.find("full"), std::string::npos);
    EXPECT_NE(table.find("0.2000"), std::string::npos);
}
