#include "sdseg/plots.hpp"

#include <algorithm>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sdseg/errors.hpp"

namespace sdseg {

namespace {

const cv::Scalar kTeethColor(180, 130, 60);    // BGR steel blue
const cv::Scalar kPlaqueColor(70, 60, 200);    // BGR brick red
const cv::Scalar kAxisColor(60, 60, 60);
const cv::Scalar kGridColor(225, 225, 225);

struct Frame {
  cv::Rect area;  // plot area in canvas pixels
  int x(double v) const { return area.x + static_cast<int>(v * (area.width - 1)); }
  int y(double v) const { return area.y + area.height - 1 - static_cast<int>(v * (area.height - 1)); }
};

void draw_frame(cv::Mat& canvas, const Frame& f, const std::string& x_label,
                const std::string& y_label) {
  for (int i = 0; i <= 10; ++i) {
    double v = i / 10.0;
    cv::line(canvas, {f.x(0.0), f.y(v)}, {f.x(1.0), f.y(v)}, kGridColor, 1);
  }
  cv::rectangle(canvas, f.area, kAxisColor, 1);
  for (int i = 0; i <= 10; i += 2) {
    double v = i / 10.0;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    cv::putText(canvas, buf, {f.area.x - 34, f.y(v) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.38,
                kAxisColor, 1, cv::LINE_AA);
  }
  cv::putText(canvas, x_label, {f.area.x + f.area.width / 2 - 60, f.area.y + f.area.height + 30},
              cv::FONT_HERSHEY_SIMPLEX, 0.45, kAxisColor, 1, cv::LINE_AA);
  cv::putText(canvas, y_label, {f.area.x - 40, f.area.y - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
              kAxisColor, 1, cv::LINE_AA);
}

void draw_box(cv::Mat& canvas, const Frame& f, double x_center_frac, double box_w_frac,
              std::vector<double> values, const cv::Scalar& color) {
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    double pos = q * (values.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(values.size() - 1, lo + 1);
    double t = pos - lo;
    return values[lo] * (1 - t) + values[hi] * t;
  };
  double q1 = quantile(0.25), med = quantile(0.5), q3 = quantile(0.75);
  double lo = values.front(), hi = values.back();
  int cx = f.x(x_center_frac);
  int half = static_cast<int>(box_w_frac * f.area.width / 2);
  cv::rectangle(canvas, {cx - half, f.y(q3)}, {cx + half, f.y(q1)}, color, 2);
  cv::line(canvas, {cx - half, f.y(med)}, {cx + half, f.y(med)}, color, 2);
  cv::line(canvas, {cx, f.y(q3)}, {cx, f.y(hi)}, color, 1);
  cv::line(canvas, {cx, f.y(q1)}, {cx, f.y(lo)}, color, 1);
  cv::line(canvas, {cx - half / 2, f.y(hi)}, {cx + half / 2, f.y(hi)}, color, 1);
  cv::line(canvas, {cx - half / 2, f.y(lo)}, {cx + half / 2, f.y(lo)}, color, 1);
}

void save(const cv::Mat& canvas, const std::string& path) {
  if (!cv::imwrite(path, canvas)) throw DataError(path + ": cannot write plot");
}

}  // namespace

void plot_dice_per_image(const EvalReport& report, const std::string& path) {
  const int n = static_cast<int>(report.per_image.size());
  cv::Mat canvas(540, 1000, CV_8UC3, cv::Scalar(255, 255, 255));

  // left: per-image bars (capped), right: distribution boxes
  Frame bars{cv::Rect(60, 50, 600, 420)};
  Frame boxes{cv::Rect(740, 50, 200, 420)};
  draw_frame(canvas, bars, "image index", "Dice");
  draw_frame(canvas, boxes, "", "Dice");

  const int shown = std::min(n, 64);
  for (int i = 0; i < shown; ++i) {
    const auto& m = report.per_image[static_cast<size_t>(i)];
    double x0 = static_cast<double>(i) / shown;
    double x1 = static_cast<double>(i + 1) / shown;
    int left = bars.x(x0) + 1;
    int width = std::max(2, bars.x(x1) - left - 1);
    int teeth_w = std::max(1, width / 2);
    cv::rectangle(canvas, {left, bars.y(m.dice_teeth)}, {left + teeth_w, bars.y(0.0)},
                  kTeethColor, cv::FILLED);
    cv::rectangle(canvas, {left + teeth_w, bars.y(m.dice_plaque)}, {left + width, bars.y(0.0)},
                  kPlaqueColor, cv::FILLED);
  }
  if (n > shown) {
    cv::putText(canvas, "(first 64 of " + std::to_string(n) + " images)", {70, 40},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, kAxisColor, 1, cv::LINE_AA);
  }

  std::vector<double> teeth, plaque;
  for (const auto& m : report.per_image) {
    teeth.push_back(m.dice_teeth);
    plaque.push_back(m.dice_plaque);
  }
  draw_box(canvas, boxes, 0.3, 0.25, teeth, kTeethColor);
  draw_box(canvas, boxes, 0.7, 0.25, plaque, kPlaqueColor);

  cv::rectangle(canvas, {740, 496}, {756, 512}, kTeethColor, cv::FILLED);
  cv::putText(canvas, "teeth", {762, 509}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kAxisColor, 1,
              cv::LINE_AA);
  cv::rectangle(canvas, {840, 496}, {856, 512}, kPlaqueColor, cv::FILLED);
  cv::putText(canvas, "plaque", {862, 509}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kAxisColor, 1,
              cv::LINE_AA);
  save(canvas, path);
}

void plot_pr_scatter(const EvalReport& report, const std::string& path) {
  cv::Mat canvas(620, 620, CV_8UC3, cv::Scalar(255, 255, 255));
  Frame f{cv::Rect(70, 50, 500, 500)};

  // +-0.05 agreement band around the diagonal
  std::vector<cv::Point> band;
  auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  for (int i = 0; i <= 100; ++i) {
    double x = i / 100.0;
    band.emplace_back(f.x(x), f.y(clamp01(x + 0.05)));
  }
  for (int i = 100; i >= 0; --i) {
    double x = i / 100.0;
    band.emplace_back(f.x(x), f.y(clamp01(x - 0.05)));
  }
  cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{band}, cv::Scalar(235, 245, 235));

  draw_frame(canvas, f, "PR (ground truth)", "PR (prediction)");
  cv::line(canvas, {f.x(0.0), f.y(0.0)}, {f.x(1.0), f.y(1.0)}, cv::Scalar(150, 150, 150), 1,
           cv::LINE_AA);
  for (const auto& m : report.per_image) {
    bool inside = std::abs(m.pr_gt - m.pr_pred) <= 0.05;
    cv::circle(canvas, {f.x(m.pr_gt), f.y(m.pr_pred)}, 4,
               inside ? cv::Scalar(90, 160, 60) : cv::Scalar(60, 60, 200), cv::FILLED,
               cv::LINE_AA);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "PR%% = %.2f%%", report.pr_percent * 100.0);
  cv::putText(canvas, buf, {f.area.x + 8, f.area.y + 22}, cv::FONT_HERSHEY_SIMPLEX, 0.55,
              kAxisColor, 1, cv::LINE_AA);
  save(canvas, path);
}

}  // namespace sdseg
