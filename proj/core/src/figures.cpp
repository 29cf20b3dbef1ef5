#include <algorithm>
#include <cmath>
#include <map>

#include "c4g/deformable.hpp"

namespace c4g {

FigureTable figure_assignment(int kernel_size, CyclicGroup group) {
  C4G_CHECK_CONFIG(kernel_size >= 3 && kernel_size % 2 == 1,
                   "figure assignment needs an odd kernel size >= 3, got " << kernel_size);
  const int m = (kernel_size - 1) / 2;
  FigureTable table;
  table.kernel_size = kernel_size;
  table.group = group;

  if (group.order == 4) {
    // Figures are keyed by the sorted absolute offset (max,min); each figure
    // is the closure of one canonical offset under rotation and axis swap,
    // so it is closed under the C4 action and the count is m(m+3)/2.
    std::map<std::pair<int, int>, int> figure_of;
    for (int a = 1; a <= m; ++a)
      for (int b = 0; b <= a; ++b) {
        int id = static_cast<int>(figure_of.size());
        figure_of[{a, b}] = id;
      }
    for (int di = -m; di <= m; ++di)
      for (int dj = -m; dj <= m; ++dj) {
        table.offsets.push_back({static_cast<double>(di), static_cast<double>(dj)});
        if (di == 0 && dj == 0) {
          table.param_index.push_back(-1);
        } else {
          int a = std::max(std::abs(di), std::abs(dj));
          int b = std::min(std::abs(di), std::abs(dj));
          table.param_index.push_back(figure_of.at({a, b}));
        }
      }
    table.num_params = static_cast<int>(figure_of.size());
    return table;
  }

  if (group.order == 8) {
    // One ring of 8 points per radius; points off the axes are fractional,
    // so C8 sampling is bilinear and only approximately equivariant.
    table.offsets.push_back({0.0, 0.0});
    table.param_index.push_back(-1);
    for (int r = 1; r <= m; ++r) {
      for (int k = 0; k < 8; ++k) {
        double theta = k * M_PI / 4.0;
        double di = r * std::sin(theta);
        double dj = r * std::cos(theta);
        if (std::abs(di) < 1e-12) di = 0.0;
        if (std::abs(dj) < 1e-12) dj = 0.0;
        table.offsets.push_back({di, dj});
        table.param_index.push_back(r - 1);
      }
    }
    table.num_params = m;
    return table;
  }

  C4G_CHECK_CONFIG(false, "unsupported group order " << group.order << " for figure assignment");
  return table;
}

}  // namespace c4g
