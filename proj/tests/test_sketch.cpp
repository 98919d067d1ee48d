#include "sketch3t/error.hpp"
#include "sketch3t/rng.hpp"
#include "sketch3t/sketch.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <set>
#include <utility>

using namespace sketch3t;

namespace {

StrokePoint pt(double x, double y, int pen) { return {x, y, pen == 0, pen == 1, pen == 2}; }

bool black(const RasterImage& img, int r, int c) {
    return img.at(r, c, 0) == 0.0 && img.at(r, c, 1) == 0.0 && img.at(r, c, 2) == 0.0;
}

bool white(const RasterImage& img, int r, int c) {
    return img.at(r, c, 0) == 1.0 && img.at(r, c, 1) == 1.0 && img.at(r, c, 2) == 1.0;
}

std::set<std::pair<int, int>> black_pixels(const RasterImage& img) {
    std::set<std::pair<int, int>> out;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            if (black(img, r, c)) out.emplace(r, c);
            else EXPECT_TRUE(white(img, r, c)) << r << "," << c;
        }
    return out;
}

// Grey-scale Sobel magnitude, computed directly from the definition.
std::vector<double> sobel_oracle(const RasterImage& p) {
    const int h = p.height, w = p.width;
    const auto grey = [&](int r, int c) {
        r = std::clamp(r, 0, h - 1);
        c = std::clamp(c, 0, w - 1);
        return 0.299 * p.at(r, c, 0) + 0.587 * p.at(r, c, 1) + 0.114 * p.at(r, c, 2);
    };
    std::vector<double> mag(static_cast<std::size_t>(h) * w);
    double mx = 0.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double gx = (grey(r - 1, c + 1) + 2 * grey(r, c + 1) + grey(r + 1, c + 1)) -
                              (grey(r - 1, c - 1) + 2 * grey(r, c - 1) + grey(r + 1, c - 1));
            const double gy = (grey(r + 1, c - 1) + 2 * grey(r + 1, c) + grey(r + 1, c + 1)) -
                              (grey(r - 1, c - 1) + 2 * grey(r - 1, c) + grey(r - 1, c + 1));
            mag[static_cast<std::size_t>(r) * w + c] = std::hypot(gx, gy);
            mx = std::max(mx, mag[static_cast<std::size_t>(r) * w + c]);
        }
    if (mx > 0.0)
        for (double& m : mag) m /= mx;
    return mag;
}

} // namespace

TEST(Stroke5, SingleSegmentNormalisation) {
    const std::vector<Polyline> strokes{{{0, 0}, {10, 0}}};
    const VectorSketch sk = to_stroke5(strokes, 32);
    ASSERT_EQ(sk.length(), 2);
    EXPECT_NEAR(sk.points[0].x, 0.05, 1e-12);
    EXPECT_NEAR(sk.points[0].y, 0.5, 1e-12);
    EXPECT_EQ(sk.points[0].pen(), 0);
    EXPECT_NEAR(sk.points[1].x, 0.95, 1e-12);
    EXPECT_NEAR(sk.points[1].y, 0.5, 1e-12);
    EXPECT_EQ(sk.points[1].pen(), 2);
}

TEST(Stroke5, PenStatesAcrossStrokes) {
    const std::vector<Polyline> strokes{{{0, 0}, {1, 0}, {1, 1}}, {{0, 1}, {0, 0}}};
    const VectorSketch sk = to_stroke5(strokes, 32);
    ASSERT_EQ(sk.length(), 5);
    const int pens[] = {0, 0, 1, 0, 2};
    for (int t = 0; t < 5; ++t) EXPECT_EQ(sk.points[static_cast<std::size_t>(t)].pen(), pens[t]) << t;
    EXPECT_NO_THROW(validate(sk, 5));
}

TEST(Stroke5, TruncatesToTmax) {
    Rng rng(3);
    std::vector<Polyline> strokes;
    for (int s = 0; s < 6; ++s) {
        Polyline pl;
        for (int i = 0; i < 3 + s * 2; ++i) pl.push_back({rng.uniform(), rng.uniform()});
        strokes.push_back(pl);
    }
    for (int t_max : {1, 2, 7, 12, 20}) {
        const VectorSketch sk = to_stroke5(strokes, t_max);
        EXPECT_EQ(sk.length(), t_max);
        EXPECT_NO_THROW(validate(sk, t_max));
    }
}

TEST(Stroke5, ValidateRejectsBrokenSequences) {
    VectorSketch sk{{pt(0.1, 0.1, 0), pt(0.2, 0.2, 2)}};
    EXPECT_NO_THROW(validate(sk));
    EXPECT_THROW(validate(sk, 1), InvalidSketch);
    VectorSketch two_hot = sk;
    two_hot.points[0].q2 = 1;
    EXPECT_THROW(validate(two_hot), InvalidSketch);
    VectorSketch early_end = sk;
    early_end.points[0] = pt(0.1, 0.1, 2);
    EXPECT_THROW(validate(early_end), InvalidSketch);
    VectorSketch outside = sk;
    outside.points[1].x = 1.5;
    EXPECT_THROW(validate(outside), InvalidSketch);
    EXPECT_THROW(validate(VectorSketch{}), InvalidSketch);
    const std::vector<Polyline> dot{{{1, 1}, {1, 1}}};
    EXPECT_THROW(to_stroke5(dot, 8), InvalidSketch);
}

TEST(Rasterize, HorizontalStrokeExample) {
    const VectorSketch sk{{pt(0.25, 0.5, 0), pt(0.75, 0.5, 2)}};
    const RasterImage img = rasterize(sk, 64, 64, 1);
    EXPECT_EQ(img.kind, ImageKind::sketch);
    std::set<std::pair<int, int>> expected;
    for (int c = 16; c <= 48; ++c) expected.emplace(32, c);
    EXPECT_EQ(black_pixels(img), expected);
}

TEST(Rasterize, PenUpBreaksTheLine) {
    const VectorSketch sk{{pt(0.25, 0.25, 1), pt(0.75, 0.75, 2)}};
    const std::set<std::pair<int, int>> expected{{16, 16}, {48, 48}};
    EXPECT_EQ(black_pixels(rasterize(sk, 64, 64, 1)), expected);
}

TEST(Rasterize, SinglePoint) {
    const VectorSketch sk{{pt(0.5, 0.5, 2)}};
    const std::set<std::pair<int, int>> expected{{32, 32}};
    EXPECT_EQ(black_pixels(rasterize(sk, 64, 64, 1)), expected);
}

TEST(Rasterize, RandomSegmentsMatchLineOracle) {
    // For a single segment the pixel set is the one-pixel-per-major-step
    // digital line: max(|dx|,|dy|)+1 pixels, each within half a pixel of the
    // ideal line along the minor axis, endpoints included.
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const double x0 = rng.uniform(), y0 = rng.uniform(), x1 = rng.uniform(), y1 = rng.uniform();
        const VectorSketch sk{{pt(x0, y0, 0), pt(x1, y1, 2)}};
        const auto px = black_pixels(rasterize(sk, 48, 48, 1));
        const int c0 = to_pixel(x0, 48), r0 = to_pixel(y0, 48), c1 = to_pixel(x1, 48), r1 = to_pixel(y1, 48);
        const int dx = c1 - c0, dy = r1 - r0;
        const int major = std::max(std::abs(dx), std::abs(dy));
        ASSERT_EQ(px.size(), static_cast<std::size_t>(major + 1)) << trial;
        EXPECT_TRUE(px.count({r0, c0}));
        EXPECT_TRUE(px.count({r1, c1}));
        for (const auto& [r, c] : px) {
            if (major == 0) break;
            if (std::abs(dx) >= std::abs(dy)) {
                const double ideal = r0 + static_cast<double>(dy) * (c - c0) / dx;
                EXPECT_LE(std::abs(r - ideal), 0.5 + 1e-9) << trial;
            } else {
                const double ideal = c0 + static_cast<double>(dx) * (r - r0) / dy;
                EXPECT_LE(std::abs(c - ideal), 0.5 + 1e-9) << trial;
            }
        }
    }
}

TEST(Rasterize, RejectsSmallCanvas) {
    const VectorSketch sk{{pt(0.5, 0.5, 2)}};
    EXPECT_THROW(rasterize(sk, 8, 8, 1), ShapeError);
}

TEST(Edgemap, ConstantImageIsZero) {
    const RasterImage photo(32, 32, ImageKind::photo, 0.37);
    const RasterImage e = edgemap(photo);
    EXPECT_EQ(e.kind, ImageKind::edgemap);
    for (double v : e.pixels) EXPECT_EQ(v, 0.0);
}

TEST(Edgemap, VerticalStepHitsTwoColumns) {
    // Left half black, right half white: the horizontal Sobel response is 4
    // on both columns flanking the step and 0 elsewhere, so after max
    // normalisation those two columns are exactly 1.
    RasterImage photo(16, 16, ImageKind::photo, 0.0);
    for (int r = 0; r < 16; ++r)
        for (int c = 8; c < 16; ++c)
            for (int ch = 0; ch < 3; ++ch) photo.at(r, c, ch) = 1.0;
    const RasterImage e = edgemap(photo);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(e.at(r, c, ch), (c == 7 || c == 8) ? 1.0 : 0.0, 1e-15);
}

TEST(Edgemap, MatchesSobelOracleOnRandomImages) {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        RasterImage photo(20, 24, ImageKind::photo);
        for (double& v : photo.pixels) v = rng.uniform();
        const RasterImage e = edgemap(photo);
        const std::vector<double> ref = sobel_oracle(photo);
        double mx = 0.0;
        for (int r = 0; r < 20; ++r)
            for (int c = 0; c < 24; ++c) {
                mx = std::max(mx, e.at(r, c, 0));
                for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(e.at(r, c, ch), ref[static_cast<std::size_t>(r) * 24 + c], 1e-12);
            }
        EXPECT_EQ(mx, 1.0);
    }
}
