// Minimal SVG line-chart writer for training curves and evaluation reports.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace c4g {

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series);

}  // namespace c4g
