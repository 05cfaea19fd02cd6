#ifndef PRONET_PLOT_HPP
#define PRONET_PLOT_HPP

#include <string>
#include <vector>

namespace pronet {

struct PlotSeries {
  std::string label;
  std::vector<double> y;
};

// Minimal line chart written as a PNG.
void plot_lines(const std::string& path, const std::vector<double>& x,
                const std::vector<PlotSeries>& series, const std::string& title,
                const std::string& x_label, const std::string& y_label);

}  // namespace pronet

#endif
