#include "sketch3t/plot.hpp"

#include "sketch3t/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace sketch3t {

namespace {

// 3x5 glyphs, one row per entry, bit 2 is the leftmost column.
constexpr std::array<std::array<unsigned char, 5>, 12> kGlyphs{{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1}, {7, 4, 7, 1, 7},
    {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}, {0, 0, 0, 0, 2}, {0, 0, 7, 0, 0},
}};

struct Canvas {
    RasterImage img;

    void dot(int x, int y, const std::array<double, 3>& c) {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
        for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[static_cast<std::size_t>(ch)];
    }
    void line(int x0, int y0, int x1, int y1, const std::array<double, 3>& c) {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        for (;;) {
            dot(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }
    void text(int x, int y, const std::string& s, int scale) {
        for (char ch : s) {
            int g = -1;
            if (ch >= '0' && ch <= '9') g = ch - '0';
            if (ch == '.') g = 10;
            if (ch == '-') g = 11;
            if (g >= 0)
                for (int r = 0; r < 5; ++r)
                    for (int col = 0; col < 3; ++col)
                        if (kGlyphs[static_cast<std::size_t>(g)][static_cast<std::size_t>(r)] & (4 >> col))
                            for (int a = 0; a < scale; ++a)
                                for (int b = 0; b < scale; ++b) dot(x + col * scale + a, y + r * scale + b, {0, 0, 0});
            x += 4 * scale;
        }
    }
};

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

} // namespace

RasterImage line_plot(const std::vector<double>& x, const std::vector<PlotSeries>& series, int width, int height) {
    if (x.empty()) throw Error("nothing to plot");
    for (const auto& s : series)
        if (s.y.size() != x.size()) throw ShapeError("plot series length does not match x");
    Canvas cv{RasterImage(height, width, ImageKind::photo, 1.0)};
    const int left = 56, right = width - 16, top = 16, bottom = height - 36;
    double xmin = *std::min_element(x.begin(), x.end()), xmax = *std::max_element(x.begin(), x.end());
    double ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (double v : s.y)
            if (std::isfinite(v)) {
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
            }
    if (ymin > ymax) ymin = 0.0, ymax = 1.0;
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-12) ymin -= 0.5e-3, ymax += 0.5e-3;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const auto px = [&](double v) { return left + static_cast<int>(std::lround((v - xmin) / (xmax - xmin) * (right - left))); };
    const auto py = [&](double v) { return bottom - static_cast<int>(std::lround((v - ymin) / (ymax - ymin) * (bottom - top))); };

    const std::array<double, 3> axis{0.0, 0.0, 0.0}, grid{0.85, 0.85, 0.85};
    for (int k = 1; k < 4; ++k) cv.line(left, top + k * (bottom - top) / 4, right, top + k * (bottom - top) / 4, grid);
    cv.line(left, bottom, right, bottom, axis);
    cv.line(left, top, left, bottom, axis);
    for (double v : x) {
        cv.line(px(v), bottom, px(v), bottom + 4, axis);
        const std::string l = label(v);
        cv.text(px(v) - static_cast<int>(l.size()) * 4, bottom + 10, l, 2);
    }
    cv.text(4, top, label(ymax), 2);
    cv.text(4, bottom - 10, label(ymin), 2);

    for (const auto& s : series) {
        for (std::size_t i = 0; i + 1 < x.size(); ++i)
            if (std::isfinite(s.y[i]) && std::isfinite(s.y[i + 1]))
                cv.line(px(x[i]), py(s.y[i]), px(x[i + 1]), py(s.y[i + 1]), s.color);
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::isfinite(s.y[i]))
                for (int a = -2; a <= 2; ++a)
                    for (int b = -2; b <= 2; ++b) cv.dot(px(x[i]) + a, py(s.y[i]) + b, s.color);
    }
    return cv.img;
}

} // namespace sketch3t
