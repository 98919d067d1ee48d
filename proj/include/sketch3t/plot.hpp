#pragma once

#include "sketch3t/sketch.hpp"

#include <array>
#include <string>
#include <vector>

namespace sketch3t {

struct PlotSeries {
    std::vector<double> y;
    std::array<double, 3> color{0.0, 0.0, 0.0};
};

/// Line chart on a white canvas: axes, min/max tick labels on both axes and
/// one polyline with square markers per series. x values are placed by value.
RasterImage line_plot(const std::vector<double>& x, const std::vector<PlotSeries>& series, int width = 480, int height = 320);

} // namespace sketch3t
