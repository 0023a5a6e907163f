#pragma once

// Minimal static SVG line charts. Callers pass columns read back from an
// emitted CSV, so every drawn number also exists in a data file.

#include "luq/linalg.hpp"

#include <string>
#include <vector>

namespace luq {

struct PlotSeries {
    std::string label;
    Vector x;
    Vector y;
    std::string color = "#1f77b4";
    bool markers = false;
};

struct PlotBand {
    std::string label;
    Vector x;
    Vector lower;
    Vector upper;
    std::string color = "#1f77b4";
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    std::vector<PlotBand> bands;
    std::vector<std::pair<double, double>> shaded_x;  // background spans
    double width = 720;
    double height = 420;
};

// Non-finite points are skipped (they split a line into pieces).
std::string render_svg(const PlotSpec& spec);

}  // namespace luq
