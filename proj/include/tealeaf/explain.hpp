#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <torch/types.h>

#include "tealeaf/image.hpp"
#include "tealeaf/model.hpp"

namespace tealeaf {

/// Last-stage feature maps and the gradient of the target class score with
/// respect to them, both K x h x w.
struct ActivationBundle {
  torch::Tensor activations;
  torch::Tensor gradients;
  std::int64_t target_class = 0;
};

enum class HeatmapSource { grad_cam, occlusion };

std::string_view to_string(HeatmapSource source) noexcept;

/// H x W attribution map in [0, 1]. `raw` keeps the map before max
/// normalization (h x w for Grad-CAM, H x W for occlusion).
struct Heatmap {
  torch::Tensor values;
  torch::Tensor raw;
  HeatmapSource source = HeatmapSource::grad_cam;
  std::int64_t target_class = 0;

  int height() const { return static_cast<int>(values.size(0)); }
  int width() const { return static_cast<int>(values.size(1)); }
  /// (row, col) of the maximum; first in row-major order on ties.
  std::pair<int, int> argmax() const;
};

/// Runs the backbone on `img`, and differentiates the pre-softmax score of
/// `target_class` (default: the predicted class) with respect to the output
/// of `layer` (default: the backbone's feature layer). Throws LayerNotFound
/// for any other layer name and GradientUnavailable when autograd fails.
ActivationBundle capture_activations(const ClassifierModel& model, const ImageTensor& img,
                                     std::optional<std::int64_t> target_class = std::nullopt,
                                     std::optional<std::string> layer = std::nullopt);

/// weights = spatial mean of the gradients per channel; raw map =
/// ReLU(sum_k weight_k * A_k); bilinear upsampling to out_height x
/// out_width; division by the maximum (an all-zero map stays zero).
Heatmap grad_cam_from_bundle(const ActivationBundle& bundle, int out_height, int out_width);

Heatmap grad_cam(const ClassifierModel& model, const ImageTensor& img,
                 std::optional<std::int64_t> target_class = std::nullopt,
                 std::optional<std::string> layer = std::nullopt);

enum class OverlapMode { average, max };

struct OcclusionConfig {
  int patch_size = 32;
  int stride = 16;
  float baseline_value = 0.5F;
  OverlapMode overlap = OverlapMode::average;

  /// Throws PatchLargerThanImage or InvalidArgument.
  void validate(int image_height, int image_width) const;
};

/// Top-left offsets along one axis: 0, stride, 2*stride, ... while the patch
/// fits, plus one final clipped patch when the last full patch stops short of
/// the edge.
std::vector<int> occlusion_offsets(int extent, int patch_size, int stride);

/// p0 = softmax probability of the target class on the clean image. Each
/// patch position is replaced by baseline_value and re-scored one image at a
/// time; the drop max(p0 - p, 0) is accumulated over the covered pixels and
/// overlapping patches are averaged (or max-combined). Normalized by the
/// maximum like grad_cam.
Heatmap occlusion_sensitivity(const ClassifierModel& model, const ImageTensor& img, const OcclusionConfig& cfg = {},
                              std::optional<std::int64_t> target_class = std::nullopt);

/// Five-stop ramp: blue, cyan, green, yellow, red for heat 0 .. 1.
std::array<float, 3> heat_color(float heat);

/// out = (1 - alpha) * img + alpha * ramp(heat). Throws ShapeMismatch when
/// the heatmap and image sizes differ.
ImageTensor overlay(const Heatmap& heatmap, const ImageTensor& img, double alpha);

/// 8-bit grayscale PNG of the heat values.
void write_heatmap_png(const Heatmap& heatmap, const std::filesystem::path& path);

}  // namespace tealeaf
