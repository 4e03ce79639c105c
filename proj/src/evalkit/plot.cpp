#include "weedid/evalkit/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace weedid::eval {

namespace {

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void open(std::ostringstream& out, const std::string& title, const std::string& xl, const std::string& yl) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
      << "</text>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 15 << "\" text-anchor=\"middle\">" << escape_xml(xl)
      << "</text>\n"
      << "<text x=\"18\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << kHeight / 2 << ")\">" << escape_xml(yl) << "</text>\n";
}

void axes(std::ostringstream& out, const Frame& f, bool log_x) {
  out << "<line x1=\"" << kLeft << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << kWidth - kRight << "\" y2=\""
      << f.py(f.y0) << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << kLeft << "\" y2=\"" << kTop
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(f.py(f.y0) + 16) << "\" text-anchor=\"middle\">"
        << label(log_x ? std::pow(10.0, x) : x) << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">" << label(y)
        << "</text>\n";
  }
}

}  // namespace

std::string svg_scatter(std::span<const std::pair<double, double>> points, const std::string& title,
                        const std::string& x_label, const std::string& y_label, bool log_x) {
  auto tx = [&](double x) { return log_x ? std::log10(std::max(x, 1e-12)) : x; };
  Frame f{0, 1, 0, 1};
  if (!points.empty()) {
    f.x0 = f.x1 = tx(points[0].first);
    f.y0 = f.y1 = points[0].second;
    for (const auto& [x, y] : points) {
      f.x0 = std::min(f.x0, tx(x));
      f.x1 = std::max(f.x1, tx(x));
      f.y0 = std::min(f.y0, y);
      f.y1 = std::max(f.y1, y);
    }
    if (f.x1 == f.x0) f.x1 = f.x0 + 1;
    if (f.y1 == f.y0) f.y1 = f.y0 + 1;
  }
  std::ostringstream out;
  open(out, title, x_label, y_label);
  axes(out, f, log_x);
  for (const auto& [x, y] : points)
    out << "<circle cx=\"" << num(f.px(tx(x))) << "\" cy=\"" << num(f.py(y))
        << "\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n";
  out << "</svg>\n";
  return out.str();
}

std::string svg_histogram(std::span<const double> values, int bins, const std::string& title,
                          const std::string& x_label) {
  bins = std::max(bins, 1);
  double lo = 0, hi = 1;
  if (!values.empty()) {
    lo = *std::min_element(values.begin(), values.end());
    hi = *std::max_element(values.begin(), values.end());
    if (hi == lo) hi = lo + 1;
  }
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    auto b = static_cast<int>((v - lo) / (hi - lo) * bins);
    counts[std::clamp(b, 0, bins - 1)]++;
  }
  const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
  Frame f{lo, hi, 0, static_cast<double>(peak)};
  std::ostringstream out;
  open(out, title, x_label, "count");
  axes(out, f, false);
  const double bw = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    const double x0 = f.px(lo + b * bw), x1 = f.px(lo + (b + 1) * bw);
    const double y = f.py(counts[b]);
    out << "<rect x=\"" << num(x0) << "\" y=\"" << num(y) << "\" width=\"" << num(std::max(x1 - x0 - 1, 0.5))
        << "\" height=\"" << num(f.py(0) - y) << "\" fill=\"seagreen\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace weedid::eval
