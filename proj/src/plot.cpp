#include "tealeaf/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tealeaf/error.hpp"

namespace tealeaf {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kLeft = 70;
constexpr int kRight = 20;
constexpr int kTop = 40;
constexpr int kBottom = 50;
const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrid(225, 225, 225);

const std::array<cv::Scalar, 4> kPalette{cv::Scalar(180, 119, 31), cv::Scalar(14, 127, 255),
                                         cv::Scalar(44, 160, 44), cv::Scalar(40, 39, 214)};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, kBlack, 1, cv::LINE_AA);
}

}  // namespace

cv::Mat render_line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                          const std::string& y_label) {
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) {
      throw Error(ErrorCode::LengthMismatch, "series '" + s.label + "' has unequal x and y lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const int pw = kWidth - kLeft - kRight;
  const int ph = kHeight - kTop - kBottom;
  auto to_px = [&](double x, double y) {
    return cv::Point(kLeft + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)),
                     kTop + ph - static_cast<int>(std::lround((y - y0) / (y1 - y0) * ph)));
  };

  for (int t = 0; t <= 5; ++t) {
    const double yv = y0 + (y1 - y0) * t / 5.0;
    const double xv = x0 + (x1 - x0) * t / 5.0;
    const auto py = to_px(x0, yv).y;
    const auto px = to_px(xv, y0).x;
    cv::line(img, {kLeft, py}, {kLeft + pw, py}, kGrid);
    cv::line(img, {px, kTop}, {px, kTop + ph}, kGrid);
    text(img, fmt(yv), {5, py + 4}, 0.4);
    text(img, fmt(xv), {px - 10, kTop + ph + 18}, 0.4);
  }
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, kBlack);
  text(img, title, {kLeft, 25}, 0.6);
  text(img, x_label, {kLeft + pw / 2 - 20, kHeight - 10});
  text(img, y_label, {5, kTop - 8}, 0.4);

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const auto color = kPalette[k % kPalette.size()];
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const auto p = to_px(s.x[i], s.y[i]);
      if (i > 0) cv::line(img, to_px(s.x[i - 1], s.y[i - 1]), p, color, 2, cv::LINE_AA);
      cv::circle(img, p, 3, color, cv::FILLED, cv::LINE_AA);
    }
    const int ly = kTop + 15 + static_cast<int>(k) * 18;
    cv::line(img, {kLeft + pw - 150, ly - 4}, {kLeft + pw - 125, ly - 4}, color, 2);
    text(img, s.label, {kLeft + pw - 118, ly});
  }
  return img;
}

cv::Mat render_history(const TrainingHistory& history) {
  Series train_acc{"train", {}, {}};
  Series val_acc{"validation", {}, {}};
  Series train_loss{"train", {}, {}};
  Series val_loss{"validation", {}, {}};
  for (const auto& r : history.records) {
    const auto e = static_cast<double>(r.epoch);
    train_acc.x.push_back(e);
    train_acc.y.push_back(r.train_accuracy);
    val_acc.x.push_back(e);
    val_acc.y.push_back(r.val_accuracy);
    train_loss.x.push_back(e);
    train_loss.y.push_back(r.train_loss);
    val_loss.x.push_back(e);
    val_loss.y.push_back(r.val_loss);
  }
  cv::Mat out;
  cv::hconcat(render_line_chart({train_acc, val_acc}, "Accuracy", "epoch", "accuracy"),
              render_line_chart({train_loss, val_loss}, "Loss", "epoch", "loss"), out);
  return out;
}

cv::Mat render_sweep(const SweepReport& report) {
  Series acc{"val accuracy", {}, {}};
  Series loss{"val loss", {}, {}};
  for (const auto& r : report.rows) {
    acc.x.push_back(r.epsilon);
    acc.y.push_back(r.val_accuracy);
    loss.x.push_back(r.epsilon);
    loss.y.push_back(r.val_loss);
  }
  cv::Mat out;
  cv::hconcat(render_line_chart({acc}, "Validation accuracy", "epsilon", "accuracy"),
              render_line_chart({loss}, "Validation loss", "epsilon", "loss"), out);
  return out;
}

cv::Mat render_confusion(const ConfusionMatrix& cm) {
  const int k = static_cast<int>(cm.size());
  constexpr int cell = 60;
  std::size_t longest = 0;
  for (const auto& n : cm.registry().names()) longest = std::max(longest, n.size());
  const int margin = 20 + static_cast<int>(longest) * 8;
  cv::Mat img(margin + k * cell + 10, margin + k * cell + 10, CV_8UC3, cv::Scalar(255, 255, 255));

  std::int64_t peak = 1;
  for (auto c : cm.counts()) peak = std::max(peak, c);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const auto v = cm.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      const double t = static_cast<double>(v) / static_cast<double>(peak);
      const cv::Scalar fill(255 * (1 - t), 255 - 95 * t, 255 * (1 - t));
      const cv::Point tl(margin + j * cell, margin + i * cell);
      cv::rectangle(img, tl, tl + cv::Point(cell, cell), fill, cv::FILLED);
      cv::rectangle(img, tl, tl + cv::Point(cell, cell), kGrid);
      text(img, std::to_string(v), tl + cv::Point(cell / 2 - 10, cell / 2 + 5));
    }
    const auto& name = cm.registry().name(static_cast<std::size_t>(i));
    text(img, name, {5, margin + i * cell + cell / 2 + 5}, 0.35);
    // Column headers are numbered; the row labels give the names.
    text(img, std::to_string(i), {margin + i * cell + cell / 2 - 4, margin - 6});
  }
  return img;
}

void write_image(const cv::Mat& bgr, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), bgr)) {
    throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  }
}

}  // namespace tealeaf
