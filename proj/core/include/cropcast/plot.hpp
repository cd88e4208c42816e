#pragma once

#include <string>
#include <vector>

#include "cropcast/metrics.hpp"

namespace cropcast {

/// One line on a forecast plot.
struct PlotSeries {
    std::string label;
    std::vector<Date> dates;
    Eigen::VectorXd values;
};

/// Renders truth and forecast lines as a static SVG image.
void write_forecast_svg(const std::string& path, const std::string& title,
                        const std::string& y_label, const std::vector<PlotSeries>& series);

} // namespace cropcast
