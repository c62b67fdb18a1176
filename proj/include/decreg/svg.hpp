#pragma once

#include <string>
#include <utility>
#include <vector>

namespace decreg {

// Minimal static plot rendering: axes, ticks, polylines and points.
struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool draw_lines = true;
    bool draw_points = false;
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    int width = 720;
    int height = 480;
};

void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const PlotOptions& options);

}  // namespace decreg
