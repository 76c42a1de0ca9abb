#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "harmonic.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Curve export: every curve carries its domain samples and their images, so
// one CSV row holds a full sample and the SVG can draw both panels from the
// same data. Numbers are printed with 17 significant digits, which
// round-trips IEEE doubles exactly.
// ---------------------------------------------------------------------------

struct ExportCurve {
  std::string role;
  int depth = 0;
  std::vector<cplx> z;
  std::vector<Vec2> w;
};

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<cplx> sample_circle(cplx center, double radius, int n) {
  std::vector<cplx> out;
  out.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    double t = 2.0 * kPi * double(i) / double(n);
    out.push_back(center + radius * cplx(std::cos(t), std::sin(t)));
  }
  return out;
}

inline const char* kCsvHeader = "z_re,z_im,F_re,F_im,abs_F";

inline std::string csv_render(const std::vector<ExportCurve>& curves) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const ExportCurve& c : curves)
    for (std::size_t i = 0; i < c.z.size(); ++i) {
      out += fmt17(c.z[i].real());
      out += ',';
      out += fmt17(c.z[i].imag());
      out += ',';
      out += fmt17(c.w[i].x);
      out += ',';
      out += fmt17(c.w[i].y);
      out += ',';
      out += fmt17(std::hypot(c.w[i].x, c.w[i].y));
      out += '\n';
    }
  return out;
}

// ---------------------------------------------------------------------------
// SVG: domain curves on the left panel, image curves on the right, colored
// by depth along a fixed two-color ramp.
// ---------------------------------------------------------------------------

namespace export_detail {

struct Box {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
  bool any = false;

  void add(double x, double y) {
    if (!any) {
      x0 = x1 = x;
      y0 = y1 = y;
      any = true;
      return;
    }
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
};

inline std::string ramp_color(int depth, int max_depth) {
  double t = max_depth > 0 ? double(depth) / double(max_depth) : 0.0;
  auto ch = [t](double a, double b) { return int(std::lround(a + t * (b - a))); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", ch(31, 214), ch(119, 39), ch(180, 40));
  return buf;
}

inline std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Uniform fit of a data box into a panel, y flipped for screen coordinates.
struct PanelMap {
  double px = 0.0, py = 0.0, scale = 1.0, cx = 0.0, cy = 0.0;

  static PanelMap fit(const Box& b, double panel_x, double panel_y, double side) {
    PanelMap m;
    double dx = b.any ? b.x1 - b.x0 : 1.0;
    double dy = b.any ? b.y1 - b.y0 : 1.0;
    double span = std::max(std::max(dx, dy), 1e-9) * 1.1;
    m.scale = side / span;
    m.cx = b.any ? 0.5 * (b.x0 + b.x1) : 0.0;
    m.cy = b.any ? 0.5 * (b.y0 + b.y1) : 0.0;
    m.px = panel_x + 0.5 * side;
    m.py = panel_y + 0.5 * side;
    return m;
  }

  std::string point(double x, double y) const {
    return fmt_coord(px + (x - cx) * scale) + "," + fmt_coord(py - (y - cy) * scale);
  }
};

}  // namespace export_detail

inline std::string svg_render(const std::vector<ExportCurve>& curves) {
  using namespace export_detail;
  const double side = 440.0;
  Box dom, img;
  int max_depth = 0;
  for (const ExportCurve& c : curves) {
    max_depth = std::max(max_depth, c.depth);
    for (const cplx& z : c.z) dom.add(z.real(), z.imag());
    for (const Vec2& w : c.w) img.add(w.x, w.y);
  }
  PanelMap dm = PanelMap::fit(dom, 20.0, 30.0, side);
  PanelMap im = PanelMap::fit(img, 500.0, 30.0, side);

  std::string s =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"490\" "
      "viewBox=\"0 0 960 490\">\n"
      "<rect x=\"20\" y=\"30\" width=\"440\" height=\"440\" fill=\"none\" "
      "stroke=\"#888888\"/>\n"
      "<rect x=\"500\" y=\"30\" width=\"440\" height=\"440\" fill=\"none\" "
      "stroke=\"#888888\"/>\n"
      "<text x=\"20\" y=\"20\" font-family=\"monospace\" font-size=\"14\">domain</text>\n"
      "<text x=\"500\" y=\"20\" font-family=\"monospace\" font-size=\"14\">image</text>\n";
  for (const ExportCurve& c : curves) {
    std::string color = ramp_color(c.depth, max_depth);
    for (int panel = 0; panel < 2; ++panel) {
      const PanelMap& pm = panel == 0 ? dm : im;
      s += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.2\" points=\"";
      for (std::size_t i = 0; i <= c.z.size(); ++i) {
        std::size_t j = i % std::max<std::size_t>(c.z.size(), 1);
        if (c.z.empty()) break;
        if (i) s += ' ';
        s += panel == 0 ? pm.point(c.z[j].real(), c.z[j].imag())
                        : pm.point(c.w[j].x, c.w[j].y);
      }
      s += "\"/>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace harmap
