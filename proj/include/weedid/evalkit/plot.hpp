#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace weedid::eval {

/// Static SVG scatter plot; `log_x` puts the x axis on a log10 scale.
std::string svg_scatter(std::span<const std::pair<double, double>> points, const std::string& title,
                        const std::string& x_label, const std::string& y_label, bool log_x = false);

/// Static SVG histogram with `bins` equal-width bins.
std::string svg_histogram(std::span<const double> values, int bins, const std::string& title,
                          const std::string& x_label);

}  // namespace weedid::eval
