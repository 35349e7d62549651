#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "aligntf/decoder.hpp"
#include "aligntf/model.hpp"
#include "aligntf/optim.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace aligntf;
using testutil::random_tensor;

namespace {

void expect_close(const Tensor<double>& got, const oracle::Mat& want, double tol) {
    ASSERT_EQ(got.rows(), want.r);
    ASSERT_EQ(got.cols(), want.c);
    for (std::size_t i = 0; i < want.v.size(); ++i) EXPECT_NEAR(got[i], want.v[i], tol) << "index " << i;
}

MultiGrainedFeatures<double> random_grains(std::size_t n, std::size_t rows, std::size_t d, Rng& rng) {
    MultiGrainedFeatures<double> g;
    for (std::size_t i = 0; i < n; ++i) g.grains.push_back(random_tensor({rows, d}, rng, 1.0, false));
    return g;
}

struct DecoderFixture {
    std::size_t d, heads, vocab;
    ParameterSet<double> ps;
    DecoderParams<double> dec;
    DecoderFixture(std::size_t d_, std::size_t heads_, std::size_t layers, std::size_t grains, std::size_t vocab_,
                   NormMode mode = NormMode::Mcln, std::uint64_t seed = 1, std::size_t max_len = 16)
        : d(d_), heads(heads_), vocab(vocab_), ps(seed),
          dec(DecoderParams<double>::create(ps, vocab_, d_, heads_, layers, grains, max_len, mode, 3, false)) {}
};

ModelConfig tiny_config() {
    ModelConfig c;
    c.d = 8;
    c.heads = 2;
    c.rounds = 2;
    c.layers = 2;
    c.grid = 4;
    c.channels = 1;
    c.patch = 2;
    c.tags_per_image = 3;
    c.tag_vocab = 5;
    c.report_vocab = 20;
    c.max_len = 8;
    c.keep_prob = 1.0;
    return c;
}

Image random_image(const ModelConfig& c, Rng& rng) {
    Image img{c.grid, c.channels, std::vector<float>(c.grid * c.grid * c.channels)};
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
    return img;
}

}  // namespace

TEST(Positions, SinusoidDefinition) {
    const auto table = sinusoid_table<double>(10, 8);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(table.at(0, j), j % 2 == 0 ? 0.0 : 1.0);
    expect_close(table, oracle::sinusoid(10, 8), 1e-12);
}

TEST(Positions, SameTokenDiffersAcrossPositions) {
    DecoderFixture f(8, 2, 1, 1, 10);
    const std::vector<std::size_t> tokens{1, 5, 5};
    const auto x = embed_inputs<double>(tokens, f.dec);
    bool differs = false;
    for (std::size_t j = 0; j < 8; ++j) differs |= x.at(1, j) != x.at(2, j);
    EXPECT_TRUE(differs);
    const std::vector<std::size_t> with_pad{1, 0};
    EXPECT_NO_THROW(embed_inputs<double>(with_pad, f.dec));
    const std::vector<std::size_t> too_long(17, 4);
    EXPECT_THROW(embed_inputs<double>(too_long, f.dec), SequenceError);
    EXPECT_THROW(decoder_forward<double>(too_long, MultiGrainedFeatures<double>{}, f.dec, {}), SequenceError);
}

TEST(SelfAttention, CausalWeights) {
    DecoderFixture f(8, 2, 1, 1, 10);
    Rng rng(2);
    const auto x = random_tensor({5, 8}, rng, 1.0, false);
    Probe probe;
    ForwardContext<double> ctx;
    ctx.probe = &probe;
    masked_self_attention<double>(x, f.dec.layers[0], Tensor<double>{}, ctx, "self");
    ASSERT_EQ(probe.attention.size(), 2u);
    for (const auto& m : probe.attention) {
        for (std::size_t r = 0; r < 5; ++r) {
            double s = 0;
            for (std::size_t c = 0; c < 5; ++c) {
                if (c > r) { EXPECT_EQ(m.values[r * 5 + c], 0.0); }
                s += m.values[r * 5 + c];
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
        EXPECT_EQ(m.values[0], 1.0);  // first position sees only itself
    }
    auto edited = x.clone();
    for (std::size_t j = 0; j < 8; ++j) edited.at(3, j) += 1.0;
    const auto a = masked_self_attention<double>(x, f.dec.layers[0], Tensor<double>{}, {});
    const auto b = masked_self_attention<double>(edited, f.dec.layers[0], Tensor<double>{}, {});
    for (std::size_t i = 0; i < 3 * 8; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Aea, GateSaturationAndHalfGates) {
    DecoderFixture f(8, 2, 1, 2, 10);
    auto& p = f.dec.layers[0].aea;
    Rng rng(3);
    const auto h = random_tensor({3, 8}, rng, 1.0, false);
    const auto grains = random_grains(2, 4, 8, rng);

    AeaParams<double> one{{p.attn[0]}, {p.gate_weight[0]}, {p.gate_bias[0]}};
    testutil::fill(one.gate_bias[0], 60.0);
    const MultiGrainedFeatures<double> first{{grains.grains[0]}};
    const auto sat = aea(h, first, one);
    const auto c1 = mha(h, grains.grains[0], p.attn[0]);
    for (std::size_t i = 0; i < sat.size(); ++i) EXPECT_NEAR(sat[i], c1[i], 1e-12);

    for (std::size_t i = 0; i < 2; ++i) {
        testutil::fill(p.gate_weight[i], 0.0);
        testutil::fill(p.gate_bias[i], 0.0);
    }
    Probe probe;
    const auto half = aea(h, grains, p, &probe, "aea");
    const auto c2 = mha(h, grains.grains[1], p.attn[1]);
    for (std::size_t i = 0; i < half.size(); ++i) EXPECT_EQ(half[i], 0.5 * c1[i] + 0.5 * c2[i]);
    ASSERT_EQ(probe.gates.size(), 2u);
    for (const auto& g : probe.gates)
        for (double v : g.values) EXPECT_EQ(v, 0.5);
    EXPECT_THROW(aea(h, first, p), ConfigError);
}

TEST(Aea, GatesInOpenIntervalAndLinearInReadouts) {
    DecoderFixture f(8, 2, 1, 3, 10, NormMode::Mcln, 4);
    const auto& p = f.dec.layers[0].aea;
    Rng rng(5);
    const auto h = random_tensor({4, 8}, rng, 2.0, false);
    const auto grains = random_grains(3, 3, 8, rng);
    Probe probe;
    const auto out = aea(h, grains, p, &probe, "aea");
    ASSERT_EQ(probe.gates.size(), 3u);
    std::vector<double> recomposed(out.size(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto c = mha(h, grains.grains[i], p.attn[i]);
        for (std::size_t k = 0; k < out.size(); ++k) {
            const double lambda = probe.gates[i].values[k];
            EXPECT_GT(lambda, 0.0);
            EXPECT_LT(lambda, 1.0);
            recomposed[k] += lambda * c[k];
        }
    }
    for (std::size_t k = 0; k < out.size(); ++k) EXPECT_NEAR(out[k], recomposed[k], 1e-6);
}

TEST(Mcln, ZeroDeltasReduceToSublayer) {
    DecoderFixture f(8, 2, 1, 1, 10);
    auto& norm = f.dec.layers[0].norms[1];
    Rng rng(6);
    for (auto& g : norm.base.gain.values()) g = 1.0 + 0.2 * rng.normal();
    for (auto& b : norm.base.bias.values()) b = 0.2 * rng.normal();
    testutil::fill(norm.delta_gain, 0.0);
    testutil::fill(norm.delta_bias, 0.0);
    const auto x = random_tensor({4, 8}, rng, 1.0, false), sub = random_tensor({4, 8}, rng, 1.0, false);
    const auto pooled = random_tensor({4, 8}, rng, 1.0, false);
    const auto a = mcln(x, sub, pooled, norm, {});
    const auto b = sublayer(x, sub, norm.base, {});
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
    EXPECT_THROW(mcln(x, sub, slice_rows(pooled, 0, 3), norm, {}), DimensionError);

    // Zero memory with untouched deltas is also the plain sublayer.
    DecoderFixture g(8, 2, 1, 1, 10);
    const auto c = mcln(x, sub, Tensor<double>({4, 8}), g.dec.layers[0].norms[0], {});
    const auto e = sublayer(x, sub, g.dec.layers[0].norms[0].base, {});
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], e[i], 1e-15);
}

TEST(Mcln, RowStatisticsBeforeModulation) {
    DecoderFixture f(8, 2, 1, 1, 10);
    auto& norm = f.dec.layers[0].norms[0];
    testutil::fill(norm.delta_gain, 0.0);
    testutil::fill(norm.delta_bias, 0.0);
    Rng rng(7);
    const auto out = mcln(random_tensor({3, 8}, rng, 4.0, false), random_tensor({3, 8}, rng, 1.0, false),
                          random_tensor({3, 8}, rng, 1.0, false), norm, {});
    for (std::size_t r = 0; r < 3; ++r) {
        double mu = 0, var = 0;
        for (std::size_t j = 0; j < 8; ++j) mu += out.at(r, j) / 8;
        for (std::size_t j = 0; j < 8; ++j) var += (out.at(r, j) - mu) * (out.at(r, j) - mu) / 8;
        EXPECT_NEAR(mu, 0.0, 1e-5);
        EXPECT_NEAR(var, 1.0, 1e-5);
    }
}

TEST(Mcln, MemoryPathIsLiveAndDifferentiable) {
    DecoderFixture f(4, 2, 1, 1, 10, NormMode::Mcln, 8);
    const auto& mem = *f.dec.memory;
    const auto& norm = f.dec.layers[0].norms[2];
    Rng rng(9);
    const auto words = random_tensor({4, 4}, rng);
    const auto x = random_tensor({4, 4}, rng, 1.0, false), sub = random_tensor({4, 4}, rng, 1.0, false);
    const auto w = random_tensor({4, 4}, rng, 1.0, false);

    const auto base = mcln(x, sub, pooled_memory_rows(words, mem), norm, {});
    auto moved = words.clone();
    moved.at(0, 0) += 0.5;
    const auto shifted = mcln(x, sub, pooled_memory_rows(moved, mem), norm, {});
    EXPECT_NE(base.at(1, 0), shifted.at(1, 0));

    const auto r = testutil::check_gradients(
        {{"words", words}, {"initial", mem.initial}, {"gate_weight", mem.gate_weight}, {"gate_bias", mem.gate_bias},
         {"attn.wq", mem.attn.wq}, {"attn.wv", mem.attn.wv}, {"delta_gain", norm.delta_gain}},
        [&] { return sum(mul(mcln(x, sub, pooled_memory_rows(words, mem), norm, {}), w)); });
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

TEST(Memory, GateSaturationKeepsMemory) {
    DecoderFixture f(8, 2, 1, 1, 10);
    auto mem = *f.dec.memory;
    testutil::fill(mem.gate_bias, 60.0);
    Rng rng(10);
    const MemoryState<double> start{mem.initial};
    const auto next = memory_update(start, random_tensor({1, 8}, rng, 1.0, false), mem);
    for (std::size_t i = 0; i < next.matrix.size(); ++i) EXPECT_EQ(next.matrix[i], mem.initial[i]);
}

TEST(Memory, StepZeroIsTheTemplateAndCausal) {
    DecoderFixture f(8, 2, 1, 1, 10);
    const auto& mem = *f.dec.memory;
    Rng rng(11);
    const auto words = random_tensor({5, 8}, rng, 1.0, false);
    const auto pooled = pooled_memory_rows(words, mem);
    const auto tmpl = mean_rows(mem.initial);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(pooled.at(0, j), tmpl[j]);
    auto edited = words.clone();
    for (std::size_t j = 0; j < 8; ++j) edited.at(3, j) = 0.0;
    const auto again = pooled_memory_rows(edited, mem);
    for (std::size_t i = 0; i < 4 * 8; ++i) EXPECT_EQ(again[i], pooled[i]);
}

TEST(Memory, GradientThroughThreeSteps) {
    DecoderFixture f(4, 2, 1, 1, 10, NormMode::Mcln, 12);
    const auto& mem = *f.dec.memory;
    Rng rng(13);
    const auto words = random_tensor({4, 4}, rng);
    const auto w = random_tensor({3, 4}, rng, 1.0, false);
    std::vector<std::pair<std::string, Tensor<double>>> in{{"words", words},
                                                            {"initial", mem.initial},
                                                            {"wq", mem.attn.wq},
                                                            {"wk", mem.attn.wk},
                                                            {"wv", mem.attn.wv},
                                                            {"wo", mem.attn.wo},
                                                            {"gate_weight", mem.gate_weight},
                                                            {"gate_bias", mem.gate_bias}};
    const auto r = testutil::check_gradients(in, [&] {
        MemoryState<double> m{mem.initial};
        for (std::size_t s = 0; s < 3; ++s) m = memory_update(m, slice_rows(words, s, 1), mem);
        return sum(mul(m.matrix, w));
    });
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

TEST(DecoderForward, ShapeAndDistributions) {
    DecoderFixture f(8, 2, 2, 2, 13);
    Rng rng(14);
    const auto grains = random_grains(2, 3, 8, rng);
    for (std::size_t t = 1; t <= 16; t += 5) {
        std::vector<std::size_t> tokens{kBosId};
        while (tokens.size() < t) tokens.push_back(4 + rng.below(9));
        const auto logits = decoder_forward<double>(tokens, grains, f.dec, {});
        EXPECT_EQ(logits.shape(), (Shape{t, 13}));
        const auto p = softmax_rows(logits);
        for (std::size_t r = 0; r < t; ++r) {
            double s = 0;
            for (std::size_t j = 0; j < 13; ++j) s += p.at(r, j);
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(DecoderForward, EndToEndCausality) {
    for (NormMode mode : {NormMode::Mcln, NormMode::Plain}) {
        DecoderFixture f(8, 2, 2, 2, 13, mode, 15);
        Rng rng(16);
        const auto grains = random_grains(2, 3, 8, rng);
        const std::vector<std::size_t> tokens{1, 5, 7, 9, 4, 11};
        const auto base = decoder_forward<double>(tokens, grains, f.dec, {});
        for (std::size_t j = 1; j < tokens.size(); ++j) {
            auto edited = tokens;
            edited[j] = edited[j] == 12 ? 4 : edited[j] + 1;
            const auto other = decoder_forward<double>(edited, grains, f.dec, {});
            for (std::size_t i = 0; i < j * 13; ++i) ASSERT_EQ(other[i], base[i]) << "edit " << j;
            bool changed = false;
            for (std::size_t i = j * 13; i < (j + 1) * 13; ++i) changed |= other[i] != base[i];
            EXPECT_TRUE(changed);
        }
    }
}

TEST(DecoderForward, OneLayerMatchesMonolithicOracle) {
    for (std::size_t n_grains : {1u, 2u}) {
        DecoderFixture f(8, 2, 1, n_grains, 11, NormMode::Mcln, 17 + n_grains);
        Rng rng(18);
        for (auto& b : f.dec.out_bias.values()) b = 0.1 * rng.normal();
        const auto grains = random_grains(n_grains, 3, 8, rng);
        std::vector<oracle::Mat> og;
        for (const auto& g : grains.grains) og.push_back(oracle::from(g));
        const std::vector<std::size_t> tokens{1, 6, 4, 10, 6};
        const auto got = decoder_forward<double>(tokens, grains, f.dec, {});
        expect_close(got, oracle::decoder_one_layer(f.ps, tokens, og, 2), 1e-6);
    }
}

TEST(DecoderForward, TiedOutputUsesEmbeddingTable) {
    ParameterSet<double> ps(19);
    const auto dec = DecoderParams<double>::create(ps, 9, 8, 2, 1, 1, 8, NormMode::Plain, 3, true);
    EXPECT_FALSE(dec.out_weight.defined());
    EXPECT_FALSE(dec.memory.has_value());
    Rng rng(20);
    const auto logits = decoder_forward<double>(std::vector<std::size_t>{1, 4}, random_grains(1, 2, 8, rng), dec, {});
    EXPECT_EQ(logits.shape(), (Shape{2, 9}));
}

TEST(ReportLoss, AnalyticValues) {
    const Tensor<double> uniform({3, 20});
    const std::vector<std::size_t> gold{5, 7, kEosId};
    EXPECT_NEAR(report_loss(uniform, std::span<const std::size_t>(gold)).item(), std::log(20.0), 1e-12);

    Tensor<double> sharp({3, 20}, -1e3);
    for (std::size_t r = 0; r < 3; ++r) sharp.at(r, gold[r]) = 1e3;
    EXPECT_LT(report_loss(sharp, std::span<const std::size_t>(gold)).item(), 1e-12);

    const std::vector<std::size_t> padded{5, kPadId, kPadId};
    Tensor<double> z({3, 20});
    z.at(1, 3) = 50.0;  // padded rows carry no weight
    EXPECT_NEAR(report_loss(z, std::span<const std::size_t>(padded)).item(), std::log(20.0), 1e-12);

    const std::vector<std::size_t> short_gold{5, 7};
    EXPECT_THROW(report_loss(uniform, std::span<const std::size_t>(short_gold)), DimensionError);
    const std::vector<std::size_t> all_pad{0, 0, 0};
    EXPECT_THROW(report_loss(uniform, std::span<const std::size_t>(all_pad)), DataError);
}

TEST(ReportLoss, GradientMatchesFiniteDifferences) {
    Rng rng(21);
    const auto logits = random_tensor({4, 7}, rng, 2.0);
    const std::vector<std::size_t> gold{3, 6, kPadId, kEosId};
    const auto r = testutil::check_gradients({{"logits", logits}},
                                             [&] { return report_loss(logits, std::span<const std::size_t>(gold)); });
    EXPECT_LT(r.max_rel, 1e-6) << r.worst;
}

TEST(FullModel, GradientFidelityTinyConfig) {
    const auto cfg = tiny_config();
    AlignTransformer<double> model(cfg, 23);
    Rng rng(24);
    const auto image = random_image(cfg, rng);
    const std::vector<std::size_t> report{kBosId, 7, 12, 19, kEosId};
    const std::vector<std::size_t> gold_tags{1, 4};
    const ForwardContext<double> eval;
    const auto r = testutil::check_gradients(testutil::named(model.parameters()), [&] {
        const auto t = model.loss_terms(image, gold_tags, report, eval, false);
        return add(scale(t.nll_sum, 1.0 / static_cast<double>(t.tokens)), scale(t.tag, 0.5));
    });
    EXPECT_LT(r.max_rel, 1e-3) << r.worst;
    EXPECT_EQ(r.checked, model.parameters().scalar_count());
}

TEST(FullModel, LossDecreasesOverFirstAdamSteps) {
    auto cfg = tiny_config();
    cfg.d = 16;
    int monotone = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        AlignTransformer<double> model(cfg, seed);
        Rng rng(seed * 7);
        std::vector<Image> images;
        std::vector<std::vector<std::size_t>> reports;
        for (int i = 0; i < 4; ++i) {
            images.push_back(random_image(cfg, rng));
            std::vector<std::size_t> r{kBosId};
            for (int k = 0; k < 5; ++k) r.push_back(4 + rng.below(16));
            r.push_back(kEosId);
            reports.push_back(r);
        }
        const std::vector<std::size_t> gold_tags{0, 2};
        AdamState<double> adam;
        auto& ps = model.parameters();
        double previous = INFINITY;
        bool ok = true;
        for (int step = 0; step < 21; ++step) {
            Tape<double> tape;
            Tensor<double> loss;
            {
                TapeScope<double> scope(tape);
                Tensor<double> nll, tags;
                std::size_t tokens = 0;
                for (int i = 0; i < 4; ++i) {
                    const auto t = model.loss_terms(images[i], gold_tags, reports[i], {}, false);
                    nll = nll.defined() ? add(nll, t.nll_sum) : t.nll_sum;
                    tags = tags.defined() ? add(tags, t.tag) : t.tag;
                    tokens += t.tokens;
                }
                loss = add(scale(nll, 1.0 / static_cast<double>(tokens)), scale(tags, 0.5 / 4));
            }
            if (loss.item() >= previous) ok = false;
            previous = loss.item();
            if (step == 20) break;
            ps.zero_grad();
            tape.backward(loss);
            adam_step(ps.tensors(), adam);
        }
        monotone += ok ? 1 : 0;
    }
    EXPECT_GE(monotone, 19);
}
