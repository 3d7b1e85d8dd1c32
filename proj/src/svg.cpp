#include "stitchlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stitchlab::svg {
namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 30;
constexpr int kMarginTop = 50;
constexpr int kMarginBottom = 60;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

struct Range {
  double lo = 0.0, hi = 1.0;
  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    } else {
      const double m = 0.05 * (hi - lo);
      lo -= m;
      hi += m;
    }
  }
};

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

void open_svg(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title
      << "</text>\n";
}

void axes(std::ostringstream& out, const Range& xr, const Range& yr,
          const std::string& x_label, const std::string& y_label) {
  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1
      << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
      << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double px = x0 + (x1 - x0) * i / 4.0;
    const double py = y0 - (y0 - y1) * i / 4.0;
    out << "<text x=\"" << px << "\" y=\"" << y0 + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(fx) << "</text>\n";
    out << "<text x=\"" << x0 - 8 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(fy) << "</text>\n";
  }
  out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">"
      << x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << (y0 + y1) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 18 "
      << (y0 + y1) / 2 << ")\">" << y_label << "</text>\n";
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label,
                       const std::vector<Series>& series) {
  Range xr{1e300, -1e300}, yr{1e300, -1e300};
  for (const Series& s : series) {
    for (double v : s.x) xr.include(v);
    for (double v : s.y) yr.include(v);
  }
  xr.pad();
  yr.pad();
  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  auto px = [&](double v) {
    return x0 + (x1 - x0) * (v - xr.lo) / (xr.hi - xr.lo);
  };
  auto py = [&](double v) {
    return y0 - (y0 - y1) * (v - yr.lo) / (yr.hi - yr.lo);
  };
  std::ostringstream out;
  open_svg(out, title);
  axes(out, xr, yr, x_label, y_label);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << x1 - 6 << "\" y=\"" << y1 + 16 * (si + 1)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"12\" fill=\""
        << color << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<Bar>& bars) {
  Range yr{0.0, -1e300};
  for (const Bar& b : bars) {
    yr.include(b.value);
    if (b.has_interval) yr.include(b.hi);
  }
  yr.pad();
  yr.lo = std::min(yr.lo, 0.0);
  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  auto py = [&](double v) {
    return y0 - (y0 - y1) * (v - yr.lo) / (yr.hi - yr.lo);
  };
  std::ostringstream out;
  open_svg(out, title);
  axes(out, Range{0, 1}, yr, "", y_label);
  const double slot = static_cast<double>(x1 - x0) / bars.size();
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const double bx = x0 + slot * i + slot * 0.2;
    const double bw = slot * 0.6;
    out << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(py(b.value))
        << "\" width=\"" << fmt(bw) << "\" height=\""
        << fmt(py(0.0) - py(b.value)) << "\" fill=\"" << kPalette[i % 6]
        << "\"/>\n";
    if (b.has_interval) {
      const double cx = bx + bw / 2;
      out << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(py(b.lo))
          << "\" x2=\"" << fmt(cx) << "\" y2=\"" << fmt(py(b.hi))
          << "\" stroke=\"black\"/>\n";
    }
    out << "<text x=\"" << fmt(bx + bw / 2) << "\" y=\"" << y0 + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << b.label << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string maze_traces(const envs::MazeSpec& spec,
                        const std::vector<Trace>& traces, envs::Cell start,
                        envs::Cell goal) {
  const int cell = 36;
  const int w = spec.width * cell, h = spec.height * cell;
  auto cx = [&](int x) { return x * cell + cell / 2; };
  auto cy = [&](int y) { return (spec.height - 1 - y) * cell + cell / 2; };
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n";
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      out << "<rect x=\"" << x * cell << "\" y=\""
          << (spec.height - 1 - y) * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\""
          << (spec.wall_at(x, y) ? "#444444" : "#f4f4f4")
          << "\" stroke=\"#cccccc\"/>\n";
    }
  }
  out << "<circle cx=\"" << cx(start.x) << "\" cy=\"" << cy(start.y)
      << "\" r=\"" << cell / 4 << "\" fill=\"#1f77b4\"/>\n";
  out << "<circle cx=\"" << cx(goal.x) << "\" cy=\"" << cy(goal.y)
      << "\" r=\"" << cell / 4 << "\" fill=\"#2ca02c\"/>\n";
  for (const Trace& t : traces) {
    out << "<polyline fill=\"none\" stroke=\"" << t.color
        << "\" stroke-width=\"2.5\" stroke-opacity=\"0.7\" points=\"";
    for (const envs::Cell& c : t.cells) {
      out << cx(c.x) << ',' << cy(c.y) << ' ';
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace stitchlab::svg
