#include "pronet/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pronet/common.hpp"

namespace pronet {

void plot_lines(const std::string& path, const std::vector<double>& x,
                const std::vector<PlotSeries>& series, const std::string& title,
                const std::string& x_label, const std::string& y_label) {
  if (x.empty() || series.empty()) throw ConfigError("plot_lines: empty data");
  const int width = 800, height = 600;
  const int ml = 80, mr = 30, mt = 50, mb = 60;  // margins
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  double xmin = *std::min_element(x.begin(), x.end());
  double xmax = *std::max_element(x.begin(), x.end());
  double ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double v) {
    return ml + static_cast<int>((v - xmin) / (xmax - xmin) * (width - ml - mr));
  };
  auto py = [&](double v) {
    return height - mb -
           static_cast<int>((v - ymin) / (ymax - ymin) * (height - mt - mb));
  };

  const cv::Scalar axis(0, 0, 0);
  cv::line(canvas, {ml, mt}, {ml, height - mb}, axis, 1);
  cv::line(canvas, {ml, height - mb}, {width - mr, height - mb}, axis, 1);
  const std::vector<cv::Scalar> palette = {
      {180, 60, 30}, {30, 120, 200}, {40, 160, 60}, {150, 40, 150}, {20, 20, 20}};

  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
  };
  for (int t = 0; t <= 4; ++t) {
    const double yv = ymin + t * (ymax - ymin) / 4;
    const double xv = xmin + t * (xmax - xmin) / 4;
    cv::line(canvas, {ml - 4, py(yv)}, {ml, py(yv)}, axis, 1);
    cv::putText(canvas, fmt(yv), {6, py(yv) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1);
    cv::line(canvas, {px(xv), height - mb}, {px(xv), height - mb + 4}, axis, 1);
    cv::putText(canvas, fmt(xv), {px(xv) - 15, height - mb + 20},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1);
  }
  cv::putText(canvas, title, {ml, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.7, axis, 1);
  cv::putText(canvas, x_label, {width / 2 - 40, height - 15},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1);
  cv::putText(canvas, y_label, {8, mt - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1);

  for (std::size_t s = 0; s < series.size(); ++s) {
    const cv::Scalar color = palette[s % palette.size()];
    const auto& ys = series[s].y;
    for (std::size_t i = 0; i + 1 < ys.size() && i + 1 < x.size(); ++i)
      cv::line(canvas, {px(x[i]), py(ys[i])}, {px(x[i + 1]), py(ys[i + 1])}, color, 2);
    for (std::size_t i = 0; i < ys.size() && i < x.size(); ++i)
      cv::circle(canvas, {px(x[i]), py(ys[i])}, 3, color, cv::FILLED);
    cv::putText(canvas, series[s].label,
                {width - mr - 160, mt + 20 * static_cast<int>(s) + 10},
                cv::FONT_HERSHEY_SIMPLEX, 0.5, color, 1);
  }
  if (!cv::imwrite(path, canvas)) throw IoError("failed to write plot: " + path);
}

}  // namespace pronet
