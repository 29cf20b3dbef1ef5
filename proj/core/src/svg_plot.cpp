#include "c4g/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "c4g/error.hpp"

namespace c4g {

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series) {
  const int width = 720, height = 440;
  const int ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto sy = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

  std::ofstream os(path, std::ios::trunc);
  C4G_CHECK(os.good(), ErrorKind::kIo, "cannot write plot " << path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
     << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
     << "</text>\n";
  os << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
     << height - mb << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
     << "' stroke='black'/>\n";
  os << "<text x='" << width / 2 << "' y='" << height - 12 << "' text-anchor='middle' font-size='12'>"
     << x_label << "</text>\n";
  os << "<text x='16' y='" << height / 2 << "' font-size='12' transform='rotate(-90 16 "
     << height / 2 << ")' text-anchor='middle'>" << y_label << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    double xv = xmin + (xmax - xmin) * t / 4;
    double yv = ymin + (ymax - ymin) * t / 4;
    os << "<text x='" << sx(xv) << "' y='" << height - mb + 16
       << "' text-anchor='middle' font-size='10'>" << xv << "</text>\n";
    os << "<text x='" << ml - 6 << "' y='" << sy(yv) + 4 << "' text-anchor='end' font-size='10'>"
       << yv << "</text>\n";
  }
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  int ci = 0;
  for (const auto& s : series) {
    const char* color = colors[ci % 6];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < s.x.size(); ++i) os << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
    os << "'/>\n";
    os << "<text x='" << width - mr - 6 << "' y='" << mt + 16 * ci
       << "' text-anchor='end' font-size='11' fill='" << color << "'>" << s.label << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
}

}  // namespace c4g
