#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sketch3t {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point2&) const = default;
};

using Polyline = std::vector<Point2>;

/// One step of a vector sketch: absolute coordinates in the unit canvas plus a
/// one-hot pen state (q1 pen down, q2 pen up, q3 end of drawing).
struct StrokePoint {
    double x = 0.0;
    double y = 0.0;
    int q1 = 1;
    int q2 = 0;
    int q3 = 0;

    /// 0, 1 or 2 for down / up / end.
    int pen() const { return q1 ? 0 : (q2 ? 1 : 2); }

    bool operator==(const StrokePoint&) const = default;
};

struct VectorSketch {
    std::vector<StrokePoint> points;
    int category_id = 0;
    int style_id = 0;

    int length() const { return static_cast<int>(points.size()); }

    bool operator==(const VectorSketch&) const = default;
};

/// Throws InvalidSketch when the sequence breaks the stroke-5 invariants
/// (one-hot pen states, end flag exactly at the last step, unit-square
/// coordinates, length within t_max when t_max > 0).
void validate(const VectorSketch& sk, int t_max = 0);

/// Min-max normalises the polylines into the unit canvas (5% margin, aspect
/// preserved, centred) and encodes them as stroke-5 points. Sequences longer
/// than t_max lose their shortest strokes (latest first on ties) while the
/// remainder still covers t_max, then the tail is cut to exactly t_max.
VectorSketch to_stroke5(std::span<const Polyline> strokes, int t_max);

/// Margin on each side of the unit canvas used by to_stroke5.
inline constexpr double kCanvasMargin = 0.05;

enum class ImageKind : std::uint8_t { sketch, photo, edgemap };

/// H x W x 3 image, row-major, channel-interleaved, values in [0, 1].
struct RasterImage {
    int height = 0;
    int width = 0;
    ImageKind kind = ImageKind::photo;
    std::vector<double> pixels;

    RasterImage() = default;
    RasterImage(int h, int w, ImageKind k, double fill = 0.0)
        : height(h), width(w), kind(k), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

    double& at(int r, int c, int ch) { return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch]; }
    double at(int r, int c, int ch) const { return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch]; }

    bool operator==(const RasterImage&) const = default;
};

/// Unit-canvas coordinate to pixel index: round(v * size), clamped.
int to_pixel(double v, int size);

/// White canvas with black binary strokes. Every point is stamped; a pen-down
/// point is also joined to its successor with a Bresenham line.
RasterImage rasterize(const VectorSketch& sk, int height, int width, int line_width = 1);

/// Grey-scale (0.299/0.587/0.114) Sobel gradient magnitude with replicated
/// borders, divided by its maximum and copied to three channels. A constant
/// image maps to all zeros.
RasterImage edgemap(const RasterImage& photo);

} // namespace sketch3t
