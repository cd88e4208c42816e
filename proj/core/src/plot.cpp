#include "cropcast/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "io_util.hpp"

namespace cropcast {

namespace {

constexpr int kWidth = 960, kHeight = 520;
constexpr int kMarginLeft = 70, kMarginRight = 20, kMarginTop = 40, kMarginBottom = 50;

const char* kPalette[] = {"#222222", "#d62728", "#1f77b4", "#2ca02c",
                          "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

} // namespace

void write_forecast_svg(const std::string& path, const std::string& title,
                        const std::string& y_label, const std::vector<PlotSeries>& series) {
    if (series.empty()) throw DataError("plot needs at least one series");

    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    for (const auto& s : series) {
        if (s.dates.empty() || s.values.size() != static_cast<Eigen::Index>(s.dates.size()))
            throw DataError("plot series '" + s.label + "' is inconsistent");
        x_min = std::min(x_min, static_cast<double>(s.dates.front().serial()));
        x_max = std::max(x_max, static_cast<double>(s.dates.back().serial()));
        y_min = std::min(y_min, s.values.minCoeff());
        y_max = std::max(y_max, s.values.maxCoeff());
    }
    if (x_max <= x_min) x_max = x_min + 1;
    if (y_max <= y_min) {
        y_min -= 0.5;
        y_max += 0.5;
    }
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    auto sx = [&](double serial) {
        return kMarginLeft + (serial - x_min) / (x_max - x_min) * plot_w;
    };
    auto sy = [&](double v) { return kMarginTop + (y_max - v) / (y_max - y_min) * plot_h; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";

    // axes
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"#444\"/>\n";
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\""
        << kMarginLeft + plot_w << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"#444\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        const double v = y_min + (y_max - y_min) * i / 4.0;
        const double y = sy(v);
        svg << "<line x1=\"" << kMarginLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kMarginLeft
            << "\" y2=\"" << y << "\" stroke=\"#444\"/>\n";
        svg << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt_tick(v) << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
        const double serial = x_min + (x_max - x_min) * i / 4.0;
        const double x = sx(serial);
        svg << "<line x1=\"" << x << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\"" << x
            << "\" y2=\"" << kMarginTop + plot_h + 4 << "\" stroke=\"#444\"/>\n";
        svg << "<text x=\"" << x << "\" y=\"" << kMarginTop + plot_h + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << Date(static_cast<std::int64_t>(std::llround(serial))).to_string() << "</text>\n";
    }
    svg << "<text x=\"16\" y=\"" << kMarginTop + plot_h / 2
        << "\" transform=\"rotate(-90 16 " << kMarginTop + plot_h / 2
        << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << y_label
        << "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t p = 0; p < s.dates.size(); ++p) {
            if (p) svg << ' ';
            svg << fmt_tick(sx(static_cast<double>(s.dates[p].serial()))) << ','
                << fmt_tick(sy(s.values(static_cast<Eigen::Index>(p))));
        }
        svg << "\"/>\n";
        // legend
        const double ly = kMarginTop + 14.0 * static_cast<double>(i);
        svg << "<line x1=\"" << kMarginLeft + plot_w - 150 << "\" y1=\"" << ly << "\" x2=\""
            << kMarginLeft + plot_w - 130 << "\" y2=\"" << ly << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << kMarginLeft + plot_w - 124 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
    }
    svg << "</svg>\n";
    detail::write_text_file(path, svg.str());
}

} // namespace cropcast
