#pragma once

// Minimal SVG renderers for human inspection of suite outputs. Each emitter
// returns a complete standalone document; nothing here feeds back into any
// metric.

#include <string>
#include <vector>

#include "wilson/numerics.hpp"
#include "wilson/stats.hpp"

namespace wilson {

// Square matrix as a colored grid with row/column labels. Cell text is
// drawn when the grid is small enough to stay legible (n <= 12).
std::string svg_heatmap(const Matd& values,
                        const std::vector<std::string>& labels,
                        const std::string& title);

struct ScatterPoint {
  double x = 0;
  double y = 0;
  int series = 0;  // color index
};

std::string svg_scatter(const std::vector<ScatterPoint>& points,
                        const std::string& title, const std::string& x_label,
                        const std::string& y_label);

// ROC polyline on the unit square with the chance diagonal.
std::string svg_roc(const std::vector<RocPoint>& roc, const std::string& title);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace wilson
