#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "isap/cli.hpp"

namespace isap::cli {

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

constexpr double kW = 640, kH = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

std::string f(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

void header(std::ostringstream& o, const std::string& title) {
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << " " << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape_xml(title) << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& fr, const std::string& xl, const std::string& yl,
          bool log_y) {
  o << "<g class=\"axes\" stroke=\"black\">\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight
    << "\" y2=\"" << kH - kBottom << "\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
    << kH - kBottom << "\"/>\n</g>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = fr.x0 + (fr.x1 - fr.x0) * i / 5.0;
    const double yv = fr.y0 + (fr.y1 - fr.y0) * i / 5.0;
    o << "<text x=\"" << f(fr.px(xv)) << "\" y=\"" << kH - kBottom + 16
      << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << f(fr.py(yv) + 4) << "\" text-anchor=\"end\">"
      << tick(log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
  }
  o << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 12
    << "\" text-anchor=\"middle\">" << escape_xml(xl) << "</text>\n"
    << "<text transform=\"translate(16," << (kTop + kH - kBottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(yl) << "</text>\n";
}

void legend(std::ostringstream& o, const std::vector<std::pair<std::string, std::string>>& items) {
  double y = kTop + 8;
  for (const auto& [label, color] : items) {
    o << "<rect x=\"" << kW - kRight - 150 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
      << color << "\"/>\n<text x=\"" << kW - kRight - 135 << "\" y=\"" << y << "\">"
      << escape_xml(label) << "</text>\n";
    y += 16;
  }
}

Frame pad(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) { x0 -= 0.5; x1 += 0.5; }
  if (!(y1 > y0)) { y0 -= 0.5; y1 += 0.5; }
  const double dy = 0.05 * (y1 - y0);
  return {x0, x1, y0 - dy, y1 + dy};
}

}  // namespace

std::string scatter_svg(const std::string& title, const std::string& x_label,
                        const std::string& y_label, const std::vector<Series>& series, bool log_y,
                        bool lines) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto yt = [&](double y) { return log_y ? std::log10(std::max(y, 1e-300)) : y; };
  for (const Series& s : series)
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x); x1 = std::max(x1, x);
      y0 = std::min(y0, yt(y)); y1 = std::max(y1, yt(y));
    }
  if (!std::isfinite(x0)) { x0 = 0; x1 = 1; y0 = 0; y1 = 1; }
  const Frame fr = pad(x0, x1, y0, y1);
  std::ostringstream o;
  header(o, title);
  o << "<g class=\"plot\">\n";
  axes(o, fr, x_label, y_label, log_y);
  std::vector<std::pair<std::string, std::string>> items;
  for (const Series& s : series) {
    items.emplace_back(s.label, s.color);
    o << "<g class=\"series\" fill=\"" << s.color << "\" stroke=\"" << s.color << "\">\n";
    if (lines && s.points.size() > 1) {
      o << "<polyline fill=\"none\" stroke-width=\"1.5\" points=\"";
      for (auto [x, y] : s.points) o << f(fr.px(x)) << "," << f(fr.py(yt(y))) << " ";
      o << "\"/>\n";
    }
    for (auto [x, y] : s.points)
      o << "<circle cx=\"" << f(fr.px(x)) << "\" cy=\"" << f(fr.py(yt(y))) << "\" r=\"2\" stroke=\"none\" fill-opacity=\"0.6\"/>\n";
    o << "</g>\n";
  }
  legend(o, items);
  o << "</g>\n</svg>\n";
  return o.str();
}

std::string histogram_svg(const std::string& title, const std::string& x_label, double lo,
                          double hi, const std::vector<HistogramSeries>& series) {
  std::vector<std::vector<double>> dens;
  double ymax = 0.0;
  for (const HistogramSeries& s : series) {
    double n = 0.0;
    for (std::size_t c : s.counts) n += double(c);
    const double w = (hi - lo) / double(std::max<std::size_t>(1, s.counts.size()));
    std::vector<double> d;
    for (std::size_t c : s.counts) d.push_back(n > 0 ? double(c) / (n * w) : 0.0);
    for (double v : d) ymax = std::max(ymax, v);
    dens.push_back(std::move(d));
  }
  const Frame fr = pad(lo, hi, 0.0, ymax > 0 ? ymax : 1.0);
  std::ostringstream o;
  header(o, title);
  o << "<g class=\"plot\">\n";
  axes(o, fr, x_label, "density", false);
  std::vector<std::pair<std::string, std::string>> items;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const HistogramSeries& s = series[i];
    items.emplace_back(s.label, s.color);
    const std::size_t bins = s.counts.size();
    o << "<g class=\"series\" fill=\"" << s.color << "\" fill-opacity=\"0.35\" stroke=\"" << s.color << "\">\n";
    for (std::size_t b = 0; b < bins; ++b) {
      const double a = lo + (hi - lo) * double(b) / double(bins);
      const double e = lo + (hi - lo) * double(b + 1) / double(bins);
      const double top = fr.py(dens[i][b]);
      o << "<rect x=\"" << f(fr.px(a)) << "\" y=\"" << f(top) << "\" width=\""
        << f(fr.px(e) - fr.px(a)) << "\" height=\"" << f(fr.py(0.0) - top) << "\"/>\n";
    }
    o << "</g>\n";
  }
  legend(o, items);
  o << "</g>\n</svg>\n";
  return o.str();
}

}  // namespace isap::cli
