#pragma once

#include <vector>

#include "cnnprobe/image.hpp"

namespace cnnprobe {

// Minimal raster line chart: each series is drawn as a polyline with point
// markers over evenly spaced x positions; y spans [y_min, y_max]. There is no
// text, only axes and horizontal grid lines at quarters of the range.
Image render_line_plot(const std::vector<std::vector<double>>& series, int width = 640, int height = 360,
                       double y_min = 0.0, double y_max = 1.0);

}  // namespace cnnprobe
