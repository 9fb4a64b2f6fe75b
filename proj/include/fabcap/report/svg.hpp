#pragma once

// Static SVG charts rendered from the CSV outputs: line panels for training
// curves and bar panels for strategy comparisons.

#include <string>
#include <vector>

namespace fabcap::report
{

struct Series
{
    std::string name;
    std::vector<double> x;
    // Non-finite values leave a gap.
    std::vector<double> y;
};

struct Panel
{
    std::string title;
    std::string y_label;
    std::string x_label;
    std::vector<Series> lines;
    // Bar panels use bar_labels/bar_values instead of lines.
    std::vector<std::string> bar_labels;
    std::vector<double> bar_values;
};

// Panels stacked vertically in one document.
std::string render_panels(const std::vector<Panel>& panels, int width = 640, int panel_height = 240);

} // namespace fabcap::report
