#pragma once

#include <string>
#include <vector>

namespace felab {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct Panel {
    std::string title;
    std::vector<Series> series;
};

// Static figure emission; plain polyline SVG, no external tooling.
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::vector<Series>& series, const std::string& xlabel = "",
                         const std::string& ylabel = "");

// Grid of mini line plots (small multiples), row-major panel order.
void write_panel_grid_svg(const std::string& path, const std::string& title,
                          const std::vector<Panel>& panels, int cols);

}  // namespace felab
