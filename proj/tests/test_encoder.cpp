#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "aligntf/encoder.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace aligntf;
using testutil::random_tensor;

namespace {

Image random_image(std::size_t grid, std::size_t channels, Rng& rng) {
    Image img{grid, channels, std::vector<float>(grid * grid * channels)};
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
    return img;
}

void expect_close(const Tensor<double>& got, const oracle::Mat& want, double tol) {
    ASSERT_EQ(got.rows(), want.r);
    ASSERT_EQ(got.cols(), want.c);
    for (std::size_t i = 0; i < want.v.size(); ++i) EXPECT_NEAR(got[i], want.v[i], tol) << "index " << i;
}

void expect_bit_equal(const Tensor<double>& a, const Tensor<double>& b) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << "index " << i;
}

DiseaseTagSet<double> tag_set(const Tensor<double>& t) {
    DiseaseTagSet<double> s;
    s.embeddings = t;
    s.ids.resize(t.rows());
    std::iota(s.ids.begin(), s.ids.end(), std::size_t{0});
    s.scores.assign(t.rows(), 0.5);
    return s;
}

}  // namespace

TEST(VisualFront, ShapeLaw) {
    ParameterSet<double> ps(1);
    const auto p = VisualEncoderParams<double>::create(ps, 8, 3, 2, 16);
    Rng rng(2);
    const auto v = toy_visual_encode(random_image(8, 3, rng), p);
    EXPECT_EQ(v.matrix.shape(), (Shape{16, 16}));
    EXPECT_EQ(v.region_count(), 16u);
    EXPECT_THROW(VisualEncoderParams<double>::create(ps, 9, 3, 2, 16), ConfigError);
    Image odd{9, 3, std::vector<float>(243)};
    EXPECT_THROW(patchify<double>(odd, 2), ConfigError);
}

TEST(VisualFront, ZeroImageYieldsPositions) {
    ParameterSet<double> ps(1);
    const auto p = VisualEncoderParams<double>::create(ps, 8, 3, 2, 16);
    const auto v = toy_visual_encode(Image{8, 3, std::vector<float>(192, 0.0f)}, p);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t j = 0; j < 16; ++j)
                EXPECT_EQ(v.matrix.at(r * 4 + c, j), p.row_position.at(r, j) + p.col_position.at(c, j));
}

TEST(VisualFront, PatchLocality) {
    ParameterSet<double> ps(1);
    const auto p = VisualEncoderParams<double>::create(ps, 8, 3, 2, 16);
    Rng rng(3);
    const auto a = random_image(8, 3, rng);
    auto b = a;
    b.at(5, 2, 1) += 0.5f;  // patch row 2, patch col 1
    const auto va = toy_visual_encode(a, p), vb = toy_visual_encode(b, p);
    for (std::size_t r = 0; r < 16; ++r) {
        bool differs = false;
        for (std::size_t j = 0; j < 16; ++j) differs |= va.matrix.at(r, j) != vb.matrix.at(r, j);
        EXPECT_EQ(differs, r == 2 * 4 + 1) << "row " << r;
    }
}

TEST(TagHead, ForcedArgmaxAndTies) {
    ParameterSet<double> ps(1);
    auto head = TagHeadParams<double>::create(ps, 4, 6);
    testutil::fill(head.weight, 0.0);
    Rng rng(4);
    const VisualFeatures<double> v{random_tensor({5, 4}, rng, 1.0, false)};
    for (std::size_t j = 0; j < 6; ++j) head.bias[j] = j == 0 ? 5.0 : -5.0;
    auto pred = predict_tags(v, head, 1);
    EXPECT_EQ(pred.selected.ids, std::vector<std::size_t>{0});

    testutil::fill(head.bias, 0.0);
    pred = predict_tags(v, head, 3);
    EXPECT_EQ(pred.selected.ids, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(pred.selected.embeddings.rows(), 3u);
    EXPECT_THROW(predict_tags(v, head, 7), ConfigError);
}

TEST(TagHead, SelectionMatchesFullSort) {
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(20);
        std::vector<double> scores(n);
        for (auto& s : scores) s = static_cast<double>(rng.below(6)) / 5.0;  // many ties
        const std::size_t k = 1 + rng.below(n);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
        order.resize(k);
        EXPECT_EQ(select_top_tags<double>(scores, k), order);
    }
}

TEST(TagHead, TeacherForcingSelectsGoldFirst) {
    ParameterSet<double> ps(1);
    auto head = TagHeadParams<double>::create(ps, 4, 8);
    Rng rng(6);
    const VisualFeatures<double> v{random_tensor({5, 4}, rng, 1.0, false)};
    const std::vector<std::size_t> gold{6, 7};
    const auto pred = predict_tags(v, head, 4, &gold);
    for (auto g : gold) EXPECT_NE(std::find(pred.selected.ids.begin(), pred.selected.ids.end(), g), pred.selected.ids.end());
    EXPECT_TRUE(std::is_sorted(pred.selected.scores.rbegin(), pred.selected.scores.rend()));
    const std::vector<std::size_t> bad{9};
    EXPECT_THROW(predict_tags(v, head, 4, &bad), DataError);
}

TEST(TagLoss, AnalyticValues) {
    Tensor<double> half({1, 5}, 0.5);
    EXPECT_NEAR(tag_loss(half, {1, 3}).item(), std::log(2.0), 1e-12);
    const auto perfect = Tensor<double>::matrix(1, 5, {0, 1, 0, 1, 0});
    EXPECT_LT(tag_loss(perfect, {1, 3}).item(), 1e-6);
    EXPECT_THROW(tag_loss(half, {5}), DataError);
}

TEST(TagLoss, GradientMatchesFiniteDifferences) {
    ParameterSet<double> ps(7);
    auto head = TagHeadParams<double>::create(ps, 4, 5);
    Rng rng(8);
    for (auto& b : head.bias.values()) b = 0.3 * rng.normal();
    const auto x = random_tensor({3, 4}, rng);
    const auto r = testutil::check_gradients({{"weight", head.weight}, {"bias", head.bias}, {"x", x}}, [&] {
        return tag_loss(predict_tags(VisualFeatures<double>{x}, head, 2).probs, {0, 3});
    });
    EXPECT_LT(r.max_rel, 1e-5) << r.worst;
}

class AhaFixture : public ::testing::Test {
protected:
    static constexpr std::size_t d = 8, heads = 2, n_v = 6, n_t = 3;
    ParameterSet<double> ps{11};
    AhaParams<double> aha = AhaParams<double>::create(ps, d, heads, 4);
    Rng rng{12};
    Tensor<double> v = random_tensor({n_v, d}, rng, 1.0, false);
    Tensor<double> t = random_tensor({n_t, d}, rng, 1.0, false);
    ForwardContext<double> eval;
};

TEST_F(AhaFixture, RoundShapes) {
    const auto r1 = align_round(v, t, aha.rounds[0], eval);
    EXPECT_EQ(r1.visual.shape(), (Shape{n_t, d}));
    EXPECT_EQ(r1.tags.shape(), (Shape{n_t, d}));
    const auto r2 = align_round(r1.visual, r1.tags, aha.rounds[1], eval);
    EXPECT_EQ(r2.visual.shape(), (Shape{n_t, d}));
    EXPECT_EQ(r2.tags.shape(), (Shape{n_t, d}));
}

TEST_F(AhaFixture, RoundMatchesComposedOracle) {
    const auto got = align_round(v, t, aha.rounds[0], eval);
    const auto [vo, to] = oracle::align_round(ps, "aha.round1", oracle::from(v), oracle::from(t), heads);
    expect_close(got.visual, vo, 1e-6);
    expect_close(got.tags, to, 1e-6);

    // Single tag over two regions.
    const auto v2 = slice_rows(v, 0, 2), t1 = slice_rows(t, 0, 1);
    const auto small = align_round(v2, t1, aha.rounds[1], eval);
    const auto [vs, ts] = oracle::align_round(ps, "aha.round2", oracle::from(v2), oracle::from(t1), heads);
    expect_close(small.visual, vs, 1e-6);
    expect_close(small.tags, ts, 1e-6);
}

TEST_F(AhaFixture, FuseGrain) {
    const auto& norm = aha.rounds[0].fuse;
    const auto zero = fuse_grain(t, scale(t, -1.0), norm);
    for (double x : zero.values()) EXPECT_EQ(x, 0.0);
    const auto u = random_tensor({n_t, d}, rng, 1.0, false);
    const auto fused = fuse_grain(t, u, norm);
    expect_close(fused, oracle::fuse(ps, "aha.round1", oracle::from(t), oracle::from(u)), 1e-12);
    for (std::size_t r = 0; r < n_t; ++r) {
        double mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += fused.at(r, j) / d;
        EXPECT_NEAR(mu, 0.0, 1e-12);
    }
}

TEST_F(AhaFixture, ShapeCascade) {
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto grains = aha_forward(VisualFeatures<double>{v}, tag_set(t), aha, eval, n);
        ASSERT_EQ(grains.size(), n);
        for (const auto& g : grains.grains) EXPECT_EQ(g.shape(), (Shape{n_t, d}));
    }
    EXPECT_THROW(aha_forward(VisualFeatures<double>{v}, tag_set(t), aha, eval, 5), ConfigError);
}

TEST_F(AhaFixture, SingleRoundEqualsRoundPlusFuse) {
    const auto grains = aha_forward(VisualFeatures<double>{v}, tag_set(t), aha, eval, 1);
    const auto [vo, to] = oracle::align_round(ps, "aha.round1", oracle::from(v), oracle::from(t), heads);
    expect_close(grains.grains[0], oracle::fuse(ps, "aha.round1", vo, to), 1e-6);
}

TEST_F(AhaFixture, PrefixRunReproducesEarlierGrains) {
    const auto three = aha_forward(VisualFeatures<double>{v}, tag_set(t), aha, eval, 3);
    const auto two = aha_forward(VisualFeatures<double>{v}, tag_set(t), aha, eval, 2);
    for (std::size_t i = 0; i < 2; ++i) expect_bit_equal(two.grains[i], three.grains[i]);
}

TEST_F(AhaFixture, RegionPermutationInvariance) {
    const std::vector<std::size_t> perm{4, 2, 5, 0, 3, 1};
    Tensor<double> vp({n_v, d});
    for (std::size_t i = 0; i < n_v; ++i)
        for (std::size_t j = 0; j < d; ++j) vp.at(i, j) = v.at(perm[i], j);
    const auto a = aha_forward(VisualFeatures<double>{v}, tag_set(t), aha, eval, 3);
    const auto b = aha_forward(VisualFeatures<double>{vp}, tag_set(t), aha, eval, 3);
    for (std::size_t g = 0; g < 3; ++g)
        for (std::size_t i = 0; i < a.grains[g].size(); ++i) EXPECT_NEAR(a.grains[g][i], b.grains[g][i], 1e-12);
}

TEST_F(AhaFixture, TagPermutationEquivariance) {
    const std::vector<std::size_t> perm{2, 0, 1};
    Tensor<double> tp({n_t, d});
    for (std::size_t i = 0; i < n_t; ++i)
        for (std::size_t j = 0; j < d; ++j) tp.at(i, j) = t.at(perm[i], j);
    const auto a = aha_forward(VisualFeatures<double>{v}, tag_set(t), aha, eval, 3);
    const auto b = aha_forward(VisualFeatures<double>{v}, tag_set(tp), aha, eval, 3);
    for (std::size_t g = 0; g < 3; ++g)
        for (std::size_t i = 0; i < n_t; ++i)
            for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(b.grains[g].at(i, j), a.grains[g].at(perm[i], j), 1e-12);
}

TEST_F(AhaFixture, AttentionProbesSumToOne) {
    Probe probe;
    ForwardContext<double> ctx;
    ctx.probe = &probe;
    aha_forward(VisualFeatures<double>{v}, tag_set(t), aha, ctx, 3);
    EXPECT_EQ(probe.attention.size(), 3u * 2 * heads);
    EXPECT_EQ(probe.attention.front().name, "aha.round1.tag_to_region.head0");
    EXPECT_EQ(probe.attention.front().cols, n_v);
    for (const auto& m : probe.attention)
        for (std::size_t r = 0; r < m.rows; ++r) {
            double s = 0;
            for (std::size_t c = 0; c < m.cols; ++c) s += m.values[r * m.cols + c];
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
}

TEST(AhaGradient, EndToEndTiny) {
    ParameterSet<double> ps(31);
    const std::size_t d = 4;
    auto visual = VisualEncoderParams<double>::create(ps, 4, 1, 2, d);
    auto head = TagHeadParams<double>::create(ps, d, 4);
    auto aha = AhaParams<double>::create(ps, d, 2, 2);
    Rng rng(32);
    const auto image = random_image(4, 1, rng);
    const auto w = random_tensor({2, d}, rng, 1.0, false);
    const ForwardContext<double> eval;
    const auto r = testutil::check_gradients(testutil::named(ps), [&] {
        const auto vf = toy_visual_encode(image, visual);
        const auto pred = predict_tags(vf, head, 2);
        const auto grains = aha_forward(vf, pred.selected, aha, eval);
        return add(add(sum(mul(grains.grains[0], w)), sum(mul(grains.grains[1], w))), tag_loss(pred.probs, {1}));
    });
    EXPECT_LT(r.max_rel, 1e-3) << r.worst;
}
