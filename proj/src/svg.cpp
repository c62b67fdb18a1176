#include "decreg/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "decreg/errors.hpp"

namespace decreg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}

}  // namespace

void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const PlotOptions& opt) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
    auto tx = [&](double x) { return opt.log_x ? std::log10(x) : x; };
    auto ty = [&](double y) { return opt.log_y ? std::log10(y) : y; };
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (opt.log_x && x <= 0.0) continue;
            if (opt.log_y && y <= 0.0) continue;
            xmin = std::min(xmin, tx(x));
            xmax = std::max(xmax, tx(x));
            ymin = std::min(ymin, ty(y));
            ymax = std::max(ymax, ty(y));
        }
    }
    if (!(xmin <= xmax) || !(ymin <= ymax)) {
        xmin = ymin = 0.0;
        xmax = ymax = 1.0;
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;

    const double ml = 70, mr = 20, mt = 40, mb = 50;
    const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;
    auto px = [&](double x) { return ml + (tx(x) - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (ty(y) - ymin) / (ymax - ymin) * ph; };

    std::ofstream out(path);
    if (!out) throw DataError("cannot write plot file: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << opt.width << "' height='"
        << opt.height << "' viewBox='0 0 " << opt.width << " " << opt.height << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << opt.width / 2 << "' y='24' text-anchor='middle' font-size='16'>"
        << opt.title << "</text>\n";

    // Axes.
    out << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='" << mt + ph
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + ph
        << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 5.0;
        const double fy = ymin + (ymax - ymin) * i / 5.0;
        const double gx = ml + pw * i / 5.0;
        const double gy = mt + ph - ph * i / 5.0;
        out << "<line x1='" << gx << "' y1='" << mt + ph << "' x2='" << gx << "' y2='" << mt + ph + 5
            << "' stroke='black'/>\n";
        out << "<text x='" << gx << "' y='" << mt + ph + 18 << "' text-anchor='middle' font-size='10'>"
            << fmt(opt.log_x ? std::pow(10.0, fx) : fx) << "</text>\n";
        out << "<line x1='" << ml - 5 << "' y1='" << gy << "' x2='" << ml << "' y2='" << gy
            << "' stroke='black'/>\n";
        out << "<text x='" << ml - 8 << "' y='" << gy + 3 << "' text-anchor='end' font-size='10'>"
            << fmt(opt.log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    }
    out << "<text x='" << ml + pw / 2 << "' y='" << opt.height - 8
        << "' text-anchor='middle' font-size='12'>" << opt.x_label << "</text>\n";
    out << "<text x='16' y='" << mt + ph / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
        << mt + ph / 2 << ")'>" << opt.y_label << "</text>\n";

    size_t ci = 0;
    double legend_y = mt + 8;
    for (const auto& s : series) {
        const char* color = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
        ++ci;
        if (s.draw_lines && s.points.size() > 1) {
            out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
            for (const auto& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                if ((opt.log_x && x <= 0.0) || (opt.log_y && y <= 0.0)) continue;
                out << fmt(px(x)) << "," << fmt(py(y)) << " ";
            }
            out << "'/>\n";
        }
        if (s.draw_points || s.points.size() == 1) {
            for (const auto& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                if ((opt.log_x && x <= 0.0) || (opt.log_y && y <= 0.0)) continue;
                out << "<circle cx='" << fmt(px(x)) << "' cy='" << fmt(py(y)) << "' r='2' fill='"
                    << color << "'/>\n";
            }
        }
        if (!s.label.empty()) {
            out << "<rect x='" << ml + pw - 150 << "' y='" << legend_y - 8 << "' width='10' height='10' fill='"
                << color << "'/>\n";
            out << "<text x='" << ml + pw - 136 << "' y='" << legend_y + 1 << "' font-size='11'>" << s.label
                << "</text>\n";
            legend_y += 16;
        }
    }
    out << "</svg>\n";
}

}  // namespace decreg
