#include "fast/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fast {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 20.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 50.0;

const char* kPalette[] = {"#3366cc", "#dc3912", "#ff9900", "#109618", "#990099"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

struct Scale {
    double lo, hi;
    double y(double v) const {
        const double t = (v - lo) / (hi - lo);
        return kHeight - kMarginBottom - t * (kHeight - kMarginTop - kMarginBottom);
    }
};

Scale value_scale(const std::vector<double>& all) {
    double lo = *std::min_element(all.begin(), all.end());
    double hi = *std::max_element(all.begin(), all.end());
    if (lo > 0.0) lo = 0.0;
    if (hi < 0.0) hi = 0.0;
    if (hi == lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    return {lo - (lo < 0.0 ? pad : 0.0), hi + pad};
}

void add_frame(std::ostringstream& os, const std::string& title, const Scale& sc) {
    os << "<rect width='" << kWidth << "' height='" << kHeight << "' fill='white'/>\n";
    os << "<text x='" << kWidth / 2 << "' y='24' text-anchor='middle' font-size='16' "
          "font-family='sans-serif'>"
       << title << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = sc.lo + (sc.hi - sc.lo) * i / 4.0;
        const double y = sc.y(v);
        os << "<line x1='" << kMarginLeft << "' y1='" << y << "' x2='" << kWidth - kMarginRight
           << "' y2='" << y << "' stroke='#dddddd'/>\n";
        os << "<text x='" << kMarginLeft - 8 << "' y='" << y + 4
           << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << fmt(v) << "</text>\n";
    }
}

} // namespace

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
    const Scale sc = value_scale(values);
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
       << "'>\n";
    add_frame(os, title, sc);
    const double span = kWidth - kMarginLeft - kMarginRight;
    const double slot = span / static_cast<double>(values.size());
    const double bar = slot * 0.6;
    const double zero_y = sc.y(0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = kMarginLeft + slot * (static_cast<double>(i) + 0.2);
        const double y = sc.y(values[i]);
        const double top = std::min(y, zero_y);
        const double h = std::abs(zero_y - y);
        os << "<rect x='" << x << "' y='" << top << "' width='" << bar << "' height='" << h
           << "' fill='" << kPalette[0] << "'/>\n";
        os << "<text x='" << x + bar / 2 << "' y='" << kHeight - kMarginBottom + 18
           << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << labels[i]
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_line_chart(const std::string& title, const std::vector<std::string>& x_labels,
                           const std::vector<SvgSeries>& series) {
    std::vector<double> all;
    for (const SvgSeries& s : series) all.insert(all.end(), s.values.begin(), s.values.end());
    const Scale sc = value_scale(all);
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
       << "'>\n";
    add_frame(os, title, sc);
    const double span = kWidth - kMarginLeft - kMarginRight;
    const std::size_t n = x_labels.size();
    auto x_at = [&](std::size_t i) {
        return n == 1 ? kMarginLeft + span / 2
                      : kMarginLeft + span * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    for (std::size_t i = 0; i < n; ++i) {
        os << "<text x='" << x_at(i) << "' y='" << kHeight - kMarginBottom + 18
           << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << x_labels[i]
           << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % 5];
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (std::size_t i = 0; i < series[s].values.size(); ++i) {
            os << x_at(i) << "," << sc.y(series[s].values[i]) << " ";
        }
        os << "'/>\n";
        os << "<text x='" << kWidth - kMarginRight - 10 << "' y='" << kMarginTop + 16 * s
           << "' text-anchor='end' font-size='12' font-family='sans-serif' fill='" << color << "'>"
           << series[s].name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace fast
