#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core/mat.hpp>

#include "tealeaf/adversarial.hpp"
#include "tealeaf/metrics.hpp"
#include "tealeaf/trainer.hpp"

namespace tealeaf {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// BGR line chart with axes, tick labels and a legend.
cv::Mat render_line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                          const std::string& y_label);

/// Accuracy and loss panels side by side, train vs validation.
cv::Mat render_history(const TrainingHistory& history);
/// Validation accuracy and loss against epsilon.
cv::Mat render_sweep(const SweepReport& report);
/// Counts with a white-to-green fill, rows true and columns predicted.
cv::Mat render_confusion(const ConfusionMatrix& cm);

/// Throws IoFailure.
void write_image(const cv::Mat& bgr, const std::filesystem::path& path);

}  // namespace tealeaf
