#include "sketch3t/sketch.hpp"

#include "sketch3t/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sketch3t {

void validate(const VectorSketch& sk, int t_max) {
    if (sk.points.empty()) throw InvalidSketch("empty stroke sequence");
    if (t_max > 0 && sk.length() > t_max)
        throw InvalidSketch("sequence length " + std::to_string(sk.length()) + " exceeds t_max " + std::to_string(t_max));
    const std::size_t last = sk.points.size() - 1;
    for (std::size_t t = 0; t < sk.points.size(); ++t) {
        const StrokePoint& p = sk.points[t];
        const auto bit = [](int q) { return q == 0 || q == 1; };
        if (!bit(p.q1) || !bit(p.q2) || !bit(p.q3) || p.q1 + p.q2 + p.q3 != 1)
            throw InvalidSketch("pen state at step " + std::to_string(t) + " is not one-hot");
        if ((p.q3 == 1) != (t == last)) throw InvalidSketch("end-of-drawing flag must appear exactly at the last step");
        if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
            throw InvalidSketch("coordinate outside the unit canvas at step " + std::to_string(t));
    }
}

VectorSketch to_stroke5(std::span<const Polyline> strokes, int t_max) {
    if (t_max < 1) throw InvalidSketch("t_max must be positive");
    bool has_segment = false;
    double minx = std::numeric_limits<double>::infinity(), miny = minx;
    double maxx = -minx, maxy = -minx;
    for (const Polyline& s : strokes) {
        if (s.size() >= 2) has_segment = true;
        for (const Point2& p : s) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidSketch("non-finite coordinate");
            minx = std::min(minx, p.x);
            maxx = std::max(maxx, p.x);
            miny = std::min(miny, p.y);
            maxy = std::max(maxy, p.y);
        }
    }
    if (!has_segment) throw InvalidSketch("sketch needs at least one polyline with two points");
    const double extent = std::max(maxx - minx, maxy - miny);
    if (!(extent > 0.0)) throw InvalidSketch("sketch has zero extent");

    const double s = (1.0 - 2.0 * kCanvasMargin) / extent;
    const double cx = 0.5 * (minx + maxx), cy = 0.5 * (miny + maxy);
    const auto norm = [&](double v, double c) { return std::clamp(0.5 + (v - c) * s, 0.0, 1.0); };

    std::vector<Polyline> kept;
    for (const Polyline& st : strokes)
        if (!st.empty()) kept.push_back(st);

    std::size_t total = 0;
    for (const Polyline& st : kept) total += st.size();
    const auto limit = static_cast<std::size_t>(t_max);
    while (total > limit && kept.size() > 1) {
        std::size_t shortest = 0;
        for (std::size_t i = 1; i < kept.size(); ++i)
            if (kept[i].size() <= kept[shortest].size()) shortest = i;
        if (total - kept[shortest].size() < limit) break;
        total -= kept[shortest].size();
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(shortest));
    }

    VectorSketch out;
    for (const Polyline& st : kept)
        for (std::size_t i = 0; i < st.size(); ++i) {
            StrokePoint p;
            p.x = norm(st[i].x, cx);
            p.y = norm(st[i].y, cy);
            const bool last_of_stroke = i + 1 == st.size();
            p.q1 = last_of_stroke ? 0 : 1;
            p.q2 = last_of_stroke ? 1 : 0;
            p.q3 = 0;
            out.points.push_back(p);
        }
    if (out.points.size() > limit) out.points.resize(limit);
    StrokePoint& end = out.points.back();
    end.q1 = 0;
    end.q2 = 0;
    end.q3 = 1;
    return out;
}

int to_pixel(double v, int size) {
    const long p = std::lround(v * size);
    return static_cast<int>(std::clamp<long>(p, 0, size - 1));
}

namespace {

void stamp(RasterImage& img, int r, int c, int width) {
    const int lo = -(width - 1) / 2, hi = width / 2;
    for (int dr = lo; dr <= hi; ++dr)
        for (int dc = lo; dc <= hi; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= img.height || cc < 0 || cc >= img.width) continue;
            for (int ch = 0; ch < 3; ++ch) img.at(rr, cc, ch) = 0.0;
        }
}

void draw_line(RasterImage& img, int r0, int c0, int r1, int c1, int width) {
    const int dc = std::abs(c1 - c0), sc = c0 < c1 ? 1 : -1;
    const int dr = -std::abs(r1 - r0), sr = r0 < r1 ? 1 : -1;
    int err = dc + dr;
    while (true) {
        stamp(img, r0, c0, width);
        if (r0 == r1 && c0 == c1) break;
        const int e2 = 2 * err;
        if (e2 >= dr) {
            err += dr;
            c0 += sc;
        }
        if (e2 <= dc) {
            err += dc;
            r0 += sr;
        }
    }
}

} // namespace

RasterImage rasterize(const VectorSketch& sk, int height, int width, int line_width) {
    if (height < 16 || width < 16) throw ShapeError("raster canvas must be at least 16x16");
    if (line_width < 1) throw ShapeError("line width must be positive");
    RasterImage img(height, width, ImageKind::sketch, 1.0);
    const auto& pts = sk.points;
    for (std::size_t t = 0; t < pts.size(); ++t) {
        const int r = to_pixel(pts[t].y, height), c = to_pixel(pts[t].x, width);
        stamp(img, r, c, line_width);
        if (pts[t].q1 == 1 && t + 1 < pts.size())
            draw_line(img, r, c, to_pixel(pts[t + 1].y, height), to_pixel(pts[t + 1].x, width), line_width);
    }
    return img;
}

RasterImage edgemap(const RasterImage& photo) {
    const int h = photo.height, w = photo.width;
    std::vector<double> grey(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            grey[static_cast<std::size_t>(r) * w + c] =
                0.299 * photo.at(r, c, 0) + 0.587 * photo.at(r, c, 1) + 0.114 * photo.at(r, c, 2);
    const auto g = [&](int r, int c) {
        r = std::clamp(r, 0, h - 1);
        c = std::clamp(c, 0, w - 1);
        return grey[static_cast<std::size_t>(r) * w + c];
    };
    std::vector<double> mag(grey.size());
    double peak = 0.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double gx = (g(r - 1, c + 1) + 2 * g(r, c + 1) + g(r + 1, c + 1)) -
                              (g(r - 1, c - 1) + 2 * g(r, c - 1) + g(r + 1, c - 1));
            const double gy = (g(r + 1, c - 1) + 2 * g(r + 1, c) + g(r + 1, c + 1)) -
                              (g(r - 1, c - 1) + 2 * g(r - 1, c) + g(r - 1, c + 1));
            const double m = std::sqrt(gx * gx + gy * gy);
            mag[static_cast<std::size_t>(r) * w + c] = m;
            peak = std::max(peak, m);
        }
    RasterImage out(h, w, ImageKind::edgemap, 0.0);
    if (peak <= 0.0) return out;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double v = mag[static_cast<std::size_t>(r) * w + c] / peak;
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = v;
        }
    return out;
}

} // namespace sketch3t
