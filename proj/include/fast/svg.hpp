#pragma once

#include <string>
#include <vector>

namespace fast {

// Dependency-free SVG emission for the toolkit's two chart shapes.

// Vertical bars, one per label (e.g. AIE per layer).
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

// One polyline per series over shared x labels (e.g. SS/DS/LMS per layer).
struct SvgSeries {
    std::string name;
    std::vector<double> values;
};
std::string svg_line_chart(const std::string& title, const std::vector<std::string>& x_labels,
                           const std::vector<SvgSeries>& series);

} // namespace fast
