#include "fixtures.hpp"

#include "sketch3t/checkpoint.hpp"
#include "sketch3t/config.hpp"
#include "sketch3t/error.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstring>
#include <fstream>

using namespace sketch3t;
using namespace sketch3t::ad;

namespace {

Tensor random_images(int n, int canvas, Rng& rng) {
    Tensor t({n, 3, canvas, canvas});
    for (double& v : t.data) v = rng.uniform();
    return t;
}

Tensor random_rows(int n, int k, Rng& rng, double scale = 1.0) {
    Tensor t({n, k});
    for (double& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

} // namespace

TEST(Nets, DeskEncoderShape) {
    const Sketch3TNet net{NetConfig{}};
    const ParamSet p = net.init(1);
    Rng rng(1);
    const auto e = net.encode(p[Group::encoder], Var::constant(random_images(2, 64, rng)));
    EXPECT_EQ(e.features.shape(), (Shape{2, 128}));
    EXPECT_EQ(net.project(p[Group::primary], e.features).shape(), (Shape{2, 64}));
    for (double v : e.features.value().data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Nets, WideFeatureConfig) {
    NetConfig c = fixtures::tiny_net();
    c.feature_dim = 512;
    c.primary_dim = 64;
    const Sketch3TNet net{c};
    const ParamSet p = net.init(1);
    Rng rng(2);
    EXPECT_EQ(net.encode(p[Group::encoder], Var::constant(random_images(1, 16, rng))).features.shape(), (Shape{1, 512}));
}

TEST(Nets, WrongSpatialSizeThrows) {
    const Sketch3TNet net{fixtures::tiny_net()};
    const ParamSet p = net.init(1);
    EXPECT_THROW(net.encode(p[Group::encoder], Var::constant(Tensor({1, 3, 32, 32}))), ShapeError);
    EXPECT_THROW(net.project(p[Group::primary], Var::constant(Tensor({1, 5}))), ShapeError);
    EXPECT_THROW(net.stroke_weights(p[Group::eta], Var::constant(Tensor({2, 7}))), ShapeError);
}

TEST(Nets, InvalidConfigRejected) {
    NetConfig c = fixtures::tiny_net();
    c.primary_dim = c.feature_dim;
    EXPECT_THROW(validate(c), ConfigError);
    c = fixtures::tiny_net();
    c.canvas = 18;
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(Nets, DeterministicAndBatchIndependent) {
    const Sketch3TNet net{fixtures::tiny_net()};
    EXPECT_TRUE(bit_equal(net.init(4), net.init(4)));
    EXPECT_FALSE(bit_equal(net.init(4), net.init(5)));
    const ParamSet p = net.init(4);
    Rng rng(3);
    const Tensor x = random_images(3, 16, rng);
    const Tensor a = net.encode(p[Group::encoder], Var::constant(x)).features.value();
    EXPECT_EQ(a, net.encode(p[Group::encoder], Var::constant(x)).features.value());
    Tensor one({1, 3, 16, 16});
    std::copy(x.data.begin() + 768, x.data.begin() + 1536, one.data.begin());
    const Tensor b = net.encode(p[Group::encoder], Var::constant(one)).features.value();
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(b.data[static_cast<std::size_t>(j)], a.data[4 + static_cast<std::size_t>(j)], 1e-13);
}

TEST(Nets, ProjectionIsLinear) {
    const Sketch3TNet net{fixtures::tiny_net()};
    const ParamSet p = net.init(4);
    const Tensor z = net.project(p[Group::primary], Var::constant(Tensor({2, 4}))).value();
    EXPECT_EQ(z, Tensor({2, 3}, 0.0));
}

TEST(Nets, StrokeWeightsAtZeroAndRange) {
    const Sketch3TNet net{fixtures::tiny_net()};
    ParamSet p = net.init(4);
    Rng rng(5);
    const int jd = static_cast<int>(net.gradient_feature_dim());
    const Tensor j = random_rows(6, jd, rng, 50.0);
    const Tensor w0 = net.stroke_weights(p[Group::eta], Var::constant(j)).value();
    for (double v : w0.data) EXPECT_EQ(v, 0.5);
    for (const Var& v : p[Group::eta]) std::fill(v.node()->value.data.begin(), v.node()->value.data.end(), 0.0);
    const Tensor w1 = net.stroke_weights(p[Group::eta], Var::constant(j)).value();
    for (double v : w1.data) EXPECT_EQ(v, 0.5);
    fixtures::jitter(p[Group::eta], rng, 0.5);
    const Tensor w = net.stroke_weights(p[Group::eta], Var::constant(j)).value();
    EXPECT_EQ(w.shape, (Shape{6, 1}));
    for (double v : w.data) EXPECT_TRUE(v > 0.0 && v < 1.0);
    // Reversing the rows reverses the weights.
    Tensor rev({6, jd});
    for (int r = 0; r < 6; ++r)
        std::copy_n(j.data.begin() + r * jd, jd, rev.data.begin() + (5 - r) * jd);
    const Tensor wr = net.stroke_weights(p[Group::eta], Var::constant(rev)).value();
    for (int r = 0; r < 6; ++r) EXPECT_EQ(wr.data[static_cast<std::size_t>(5 - r)], w.data[static_cast<std::size_t>(r)]);
}

TEST(Nets, SketchDecoderLengthsAndModes) {
    const NetConfig c = fixtures::tiny_net();
    const Sketch3TNet net{c};
    const ParamSet p = net.init(6);
    Rng rng(6);
    const Var f = Var::constant(random_rows(1, c.feature_dim, rng));
    for (int t = 1; t <= c.t_max; ++t) {
        VectorSketch sk;
        for (int i = 0; i < t; ++i) sk.points.push_back({rng.uniform(), rng.uniform(), i + 1 < t, 0, i + 1 == t});
        const std::array<const VectorSketch*, 1> one{&sk};
        const SketchBatch b = SketchBatch::from(one);
        const auto tf = net.decode_sketch(p[Group::sketch_decoder], f, b);
        const auto ar = net.decode_sketch(p[Group::sketch_decoder], f, b, DecodeMode::autoregressive);
        ASSERT_EQ(tf.size(), static_cast<std::size_t>(t));
        ASSERT_EQ(ar.size(), static_cast<std::size_t>(t));
        EXPECT_EQ(tf[0].value(), ar[0].value());
        EXPECT_EQ(tf[0].shape(), (Shape{1, 5}));
    }
    const VectorSketch empty;
    const std::array<const VectorSketch*, 1> none{&empty};
    EXPECT_THROW(SketchBatch::from(none), InvalidSketch);
    const SketchBatch zero = SketchBatch::from(std::span<const VectorSketch* const>{});
    EXPECT_THROW(net.decode_sketch(p[Group::sketch_decoder], Var::constant(Tensor({0, c.feature_dim})), zero), InvalidSketch);
}

TEST(Nets, SketchDecoderFirstStepByHand) {
    // T = 1: h1 = GRU(h0, [reduce(f), 0]) with h0 = W_h reduce(f) + b_h.
    const NetConfig c = fixtures::tiny_net();
    const Sketch3TNet net{c};
    ParamSet p = net.init(7);
    Rng rng(7);
    fixtures::jitter(p[Group::sketch_decoder], rng, 0.2);
    const Tensor f = random_rows(1, c.feature_dim, rng);
    VectorSketch sk{{{0.3, 0.4, 0, 0, 1}}};
    const std::array<const VectorSketch*, 1> one{&sk};
    const auto psi = net.decode_sketch(p[Group::sketch_decoder], Var::constant(f), SketchBatch::from(one));
    ASSERT_EQ(psi.size(), 1u);

    const auto& d = p[Group::sketch_decoder];
    const auto affine = [](const std::vector<double>& x, const Tensor& w, const Tensor& b) {
        const int n = w.shape[0], m = w.shape[1];
        std::vector<double> y(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) {
            double s = b.data.empty() ? 0.0 : b.data[static_cast<std::size_t>(j)];
            for (int i = 0; i < n; ++i) s += x[static_cast<std::size_t>(i)] * w.data[static_cast<std::size_t>(i) * m + j];
            y[static_cast<std::size_t>(j)] = s;
        }
        return y;
    };
    const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const std::vector<double> red = affine(f.data, d[0].value(), d[1].value());
    const std::vector<double> h0 = affine(red, d[2].value(), d[3].value());
    std::vector<double> gi = affine(red, d[4].value(), d[6].value()); // previous point is zero
    const std::vector<double> gh = affine(h0, d[7].value(), d[8].value());
    const int H = c.hidden;
    std::vector<double> h1(static_cast<std::size_t>(H));
    for (int k = 0; k < H; ++k) {
        const auto u = static_cast<std::size_t>(k);
        const double r = sig(gi[u] + gh[u]);
        const double z = sig(gi[u + H] + gh[u + H]);
        const double n = std::tanh(gi[u + 2 * H] + r * gh[u + 2 * H]);
        h1[u] = (1 - z) * n + z * h0[u];
    }
    const std::vector<double> out = affine(h1, d[9].value(), d[10].value());
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(psi[0].value().data[static_cast<std::size_t>(k)], out[static_cast<std::size_t>(k)], 1e-12);
}

TEST(Nets, PhotoDecoderRange) {
    const Sketch3TNet net{NetConfig{}};
    const ParamSet p = net.init(8);
    Rng rng(8);
    const Var y = net.decode_photo(p[Group::photo_decoder], Var::constant(random_rows(2, 128, rng, 3.0)));
    EXPECT_EQ(y.shape(), (Shape{2, 3, 64, 64}));
    for (double v : y.value().data) EXPECT_TRUE(v > 0.0 && v < 1.0);
}

TEST(Nets, ParamSetCloneIsDeep) {
    const Sketch3TNet net{fixtures::tiny_net()};
    const ParamSet p = net.init(9);
    ParamSet q = p.clone();
    EXPECT_TRUE(bit_equal(p, q));
    q[Group::encoder][0].node()->value.data[0] += 1.0;
    EXPECT_FALSE(bit_equal(p, q));
    EXPECT_EQ(p.leaves().size(), q.leaves().size());
    std::size_t n = 0;
    for (const Var& v : p.leaves()) n += v.value().data.size();
    EXPECT_EQ(p.parameter_count(), n);
    EXPECT_LE(n, 5000u);
}

TEST(Checkpoint, BitExactRoundTrip) {
    const Sketch3TNet net{fixtures::tiny_net()};
    ParamSet p = net.init(10, 0.0123);
    Rng rng(10);
    for (std::size_t g = 0; g < p.groups.size(); ++g) fixtures::jitter(p.groups[g], rng, 1e-3);
    const auto path = fixtures::temp_dir("ckpt") / "c.bin";
    const std::uint64_t fp = model_fingerprint(net.config());
    save_checkpoint(path, net, p, 77);
    const Checkpoint ck = load_checkpoint(path, fp);
    EXPECT_TRUE(bit_equal(ck.params, p));
    EXPECT_EQ(ck.net, net.config());
    EXPECT_EQ(ck.config_fingerprint, 77u);
    EXPECT_EQ(ck.model_fingerprint, fp);
    EXPECT_THROW(load_checkpoint(path, fp ^ 1), CheckpointError);
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const Sketch3TNet net{fixtures::tiny_net()};
    const auto dir = fixtures::temp_dir("ckpt_bad");
    save_checkpoint(dir / "c.bin", net, net.init(1), 1);
    std::ifstream in(dir / "c.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    {
        std::ofstream out(dir / "truncated.bin", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    EXPECT_THROW(load_checkpoint(dir / "truncated.bin"), CheckpointError);
    bytes[0] = 'X';
    {
        std::ofstream out(dir / "magic.bin", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    EXPECT_THROW(load_checkpoint(dir / "magic.bin"), CheckpointError);
    EXPECT_THROW(load_checkpoint(dir / "missing.bin"), CheckpointError);
}
