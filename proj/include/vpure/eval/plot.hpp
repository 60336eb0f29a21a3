#pragma once

#include <string>
#include <utility>
#include <vector>

namespace vpure::eval {

struct Series {
  std::string label;
  std::vector<double> values;
};

/// Overlaid step histograms on a shared axis, as a standalone SVG document.
std::string histogram_svg(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, int bins = 20);

/// Horizontal bar per label, e.g. SVA per condition.
std::string bar_svg(const std::vector<std::pair<std::string, double>>& bars,
                    const std::string& title, double max_value = 1.0);

}  // namespace vpure::eval
