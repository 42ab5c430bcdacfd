#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fmsv/errors.hpp"

// minimal static SVG line charts for trace and volatility-band plots. each
// added element carries an id attribute so tests (and curious humans) can
// check what was drawn without an image parser.

namespace fmsv {

class SvgPlot {
 public:
  SvgPlot(std::string title, int width = 860, int height = 360)
      : title_(std::move(title)), width_(width), height_(height) {}

  void add_line(const std::string& id, const std::vector<double>& x,
                const std::vector<double>& y, const std::string& color) {
    if (x.size() != y.size()) throw UsageError("svg line: x and y lengths differ");
    if (x.empty()) throw UsageError("svg line: empty series");
    lines_.push_back({id, x, y, color});
    for (std::size_t i = 0; i < x.size(); ++i) expand(x[i], y[i]);
  }

  // shaded region between lo and hi, used for mean +/- 2sd volatility bands
  void add_band(const std::string& id, const std::vector<double>& x,
                const std::vector<double>& lo, const std::vector<double>& hi,
                const std::string& color) {
    if (x.size() != lo.size() || x.size() != hi.size())
      throw UsageError("svg band: column lengths differ");
    if (x.empty()) throw UsageError("svg band: empty series");
    bands_.push_back({id, x, lo, hi, color});
    for (std::size_t i = 0; i < x.size(); ++i) {
      expand(x[i], lo[i]);
      expand(x[i], hi[i]);
    }
  }

  std::string render() const {
    if (lines_.empty() && bands_.empty()) throw UsageError("svg plot has no data");
    double x0 = xmin_, x1 = xmax_, y0 = ymin_, y1 = ymax_;
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) {
      y0 -= 0.5;
      y1 += 0.5;
    }
    const double ml = 64, mr = 16, mt = 32, mb = 40;
    const double pw = width_ - ml - mr, ph = height_ - mt - mb;
    const auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    const auto sy = [&](double y) { return mt + (y1 - y) / (y1 - y0) * ph; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
        << height_ << "\" viewBox=\"0 0 " << width_ << ' ' << height_ << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << ml << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
        << title_ << "</text>\n";

    for (const auto& b : bands_) {
      out << "<polygon id=\"" << b.id << "\" fill=\"" << b.color
          << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < b.x.size(); ++i)
        out << coord(sx(b.x[i])) << ',' << coord(sy(b.hi[i])) << ' ';
      for (std::size_t i = b.x.size(); i-- > 0;)
        out << coord(sx(b.x[i])) << ',' << coord(sy(b.lo[i])) << ' ';
      out << "\"/>\n";
    }
    for (const auto& l : lines_) {
      out << "<polyline id=\"" << l.id << "\" fill=\"none\" stroke=\"" << l.color
          << "\" stroke-width=\"1\" points=\"";
      for (std::size_t i = 0; i < l.x.size(); ++i)
        out << coord(sx(l.x[i])) << ',' << coord(sy(l.y[i])) << ' ';
      out << "\"/>\n";
    }

    // frame and five ticks per axis
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double xv = x0 + (x1 - x0) * i / 4.0;
      const double yv = y0 + (y1 - y0) * i / 4.0;
      out << "<line x1=\"" << coord(sx(xv)) << "\" y1=\"" << mt + ph << "\" x2=\""
          << coord(sx(xv)) << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << coord(sx(xv)) << "\" y=\"" << mt + ph + 18
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
          << label(xv) << "</text>\n";
      out << "<line x1=\"" << ml - 4 << "\" y1=\"" << coord(sy(yv)) << "\" x2=\"" << ml
          << "\" y2=\"" << coord(sy(yv)) << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << ml - 8 << "\" y=\"" << coord(sy(yv))
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\" "
             "dominant-baseline=\"middle\">"
          << label(yv) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << render();
    if (!out) throw DataError("short write to '" + path + "'");
  }

 private:
  struct Line {
    std::string id;
    std::vector<double> x, y;
    std::string color;
  };
  struct Band {
    std::string id;
    std::vector<double> x, lo, hi;
    std::string color;
  };

  void expand(double x, double y) {
    xmin_ = std::min(xmin_, x);
    xmax_ = std::max(xmax_, x);
    ymin_ = std::min(ymin_, y);
    ymax_ = std::max(ymax_, y);
  }

  static std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
  }

  static std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
  }

  std::string title_;
  int width_, height_;
  std::vector<Line> lines_;
  std::vector<Band> bands_;
  double xmin_ = std::numeric_limits<double>::infinity(), xmax_ = -xmin_;
  double ymin_ = std::numeric_limits<double>::infinity(), ymax_ = -ymin_;
};

}  // namespace fmsv
