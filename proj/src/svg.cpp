#include "felab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "felab/errors.hpp"

namespace felab {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"};

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void include(double v) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void finalize() {
        if (!(lo < hi)) {
            lo -= 1.0;
            hi += 1.0;
        }
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    double map(double v, double px0, double px1) const {
        return px0 + (v - lo) / (hi - lo) * (px1 - px0);
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

void draw_series(std::ofstream& out, const std::vector<Series>& series, const Range& rx,
                 const Range& ry, double x0, double y0, double x1, double y1) {
    int color = 0;
    for (const Series& s : series) {
        out << "<polyline fill=\"none\" stroke=\"" << kPalette[color % 10]
            << "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            out << fmt(rx.map(s.x[i], x0, x1)) << "," << fmt(ry.map(s.y[i], y1, y0)) << " ";
        }
        out << "\"/>\n";
        ++color;
    }
}

void axes(std::ofstream& out, const Range& rx, const Range& ry, double x0, double y0, double x1,
          double y1, bool ticks) {
    out << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(x1 - x0)
        << "\" height=\"" << fmt(y1 - y0) << "\" fill=\"none\" stroke=\"#333\"/>\n";
    if (!ticks) return;
    for (int i = 0; i <= 4; ++i) {
        const double fx = rx.lo + (rx.hi - rx.lo) * i / 4.0;
        const double px = rx.map(fx, x0, x1);
        out << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(px)
            << "\" y2=\"" << fmt(y1 + 4) << "\" stroke=\"#333\"/>\n";
        out << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(y1 + 16)
            << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(fx) << "</text>\n";
        const double fy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
        const double py = ry.map(fy, y1, y0);
        out << "<line x1=\"" << fmt(x0 - 4) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(x0)
            << "\" y2=\"" << fmt(py) << "\" stroke=\"#333\"/>\n";
        out << "<text x=\"" << fmt(x0 - 6) << "\" y=\"" << fmt(py + 3)
            << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(fy) << "</text>\n";
    }
}

}  // namespace

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::vector<Series>& series, const std::string& xlabel,
                         const std::string& ylabel) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const double W = 640, H = 420, x0 = 60, y0 = 40, x1 = W - 20, y1 = H - 50;
    Range rx, ry;
    for (const Series& s : series) {
        for (double v : s.x) rx.include(v);
        for (double v : s.y) ry.include(v);
    }
    rx.finalize();
    ry.finalize();

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">"
        << title << "</text>\n";
    axes(out, rx, ry, x0, y0, x1, y1, true);
    draw_series(out, series, rx, ry, x0, y0, x1, y1);
    if (!xlabel.empty())
        out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << H - 8
            << "\" font-size=\"11\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    if (!ylabel.empty())
        out << "<text x=\"14\" y=\"" << (y0 + y1) / 2
            << "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
            << (y0 + y1) / 2 << ")\">" << ylabel << "</text>\n";
    // Legend, top-right corner.
    double ly = y0 + 12;
    for (std::size_t i = 0; i < series.size() && i < 10; ++i) {
        if (series[i].label.empty()) continue;
        out << "<line x1=\"" << x1 - 120 << "\" y1=\"" << ly << "\" x2=\"" << x1 - 100
            << "\" y2=\"" << ly << "\" stroke=\"" << kPalette[i % 10]
            << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << x1 - 95 << "\" y=\"" << ly + 3 << "\" font-size=\"10\">"
            << series[i].label << "</text>\n";
        ly += 14;
    }
    out << "</svg>\n";
    if (!out) throw IoError("svg write failed: " + path);
}

void write_panel_grid_svg(const std::string& path, const std::string& title,
                          const std::vector<Panel>& panels, int cols) {
    if (cols < 1) throw ConfigError("panel grid: cols must be >= 1");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const int rows = (static_cast<int>(panels.size()) + cols - 1) / cols;
    const double pw = 150, ph = 110, margin = 16, top = 36;
    const double W = margin + cols * (pw + margin);
    const double H = top + rows * (ph + margin + 14);

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">"
        << title << "</text>\n";

    for (std::size_t p = 0; p < panels.size(); ++p) {
        const int r = static_cast<int>(p) / cols;
        const int c = static_cast<int>(p) % cols;
        const double x0 = margin + c * (pw + margin);
        const double y0 = top + r * (ph + margin + 14);
        const double x1 = x0 + pw, y1 = y0 + ph;
        Range rx, ry;
        for (const Series& s : panels[p].series) {
            for (double v : s.x) rx.include(v);
            for (double v : s.y) ry.include(v);
        }
        rx.finalize();
        ry.finalize();
        axes(out, rx, ry, x0, y0, x1, y1, false);
        draw_series(out, panels[p].series, rx, ry, x0, y0, x1, y1);
        out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << y1 + 12
            << "\" font-size=\"9\" text-anchor=\"middle\">" << panels[p].title << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("svg write failed: " + path);
}

}  // namespace felab
