#include "tealeaf/explain.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include "tealeaf/error.hpp"

namespace tealeaf {

namespace F = torch::nn::functional;

std::string_view to_string(HeatmapSource source) noexcept {
  return source == HeatmapSource::grad_cam ? "grad_cam" : "occlusion";
}

std::pair<int, int> Heatmap::argmax() const {
  const auto flat = values.reshape({-1}).argmax().item<std::int64_t>();
  const auto w = values.size(1);
  return {static_cast<int>(flat / w), static_cast<int>(flat % w)};
}

namespace {

torch::Tensor normalize_by_max(const torch::Tensor& map) {
  const double peak = map.max().item<double>();
  if (peak > 0.0) {
    return (map / peak).clamp(0.0, 1.0);
  }
  return torch::zeros_like(map);
}

void check_target(std::int64_t target, std::int64_t num_classes) {
  if (target < 0 || target >= num_classes) {
    throw Error(ErrorCode::LabelOutOfRange, "target class " + std::to_string(target) + " out of range");
  }
}

// Restores the module's train/eval mode on scope exit.
class EvalModeScope {
 public:
  explicit EvalModeScope(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) {
    if (was_training_) module_.eval();
  }
  ~EvalModeScope() {
    if (was_training_) module_.train();
  }
  EvalModeScope(const EvalModeScope&) = delete;
  EvalModeScope& operator=(const EvalModeScope&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

}  // namespace

ActivationBundle capture_activations(const ClassifierModel& model, const ImageTensor& img,
                                     std::optional<std::int64_t> target_class, std::optional<std::string> layer) {
  if (layer && *layer != model.feature_layer()) {
    throw Error(ErrorCode::LayerNotFound, "layer '" + *layer + "' is not exposed (feature layer is '" +
                                              model.feature_layer() + "')");
  }
  auto& module = model.module();
  EvalModeScope eval_scope(module);

  torch::Tensor features;
  {
    torch::NoGradGuard no_grad;
    features = module.features(img.batch());
  }
  ActivationBundle bundle;
  try {
    torch::AutoGradMode enable_grad(true);
    auto activations = features.detach().requires_grad_(true);
    const auto logits = module.logits_from_features(activations);
    const std::int64_t target = target_class ? *target_class : argmax_lowest(logits[0].detach());
    check_target(target, model.num_classes());
    const auto score = logits.select(0, 0).select(0, target);
    torch::Tensor grad;
    if (score.requires_grad()) {
      grad = torch::autograd::grad({score}, {activations}, {}, false, false, /*allow_unused=*/true)[0];
    }
    if (!grad.defined()) {
      grad = torch::zeros_like(activations);
    }
    bundle.activations = activations.detach()[0];
    bundle.gradients = grad.detach()[0];
    bundle.target_class = target;
  } catch (const c10::Error& e) {
    throw Error(ErrorCode::GradientUnavailable, e.what_without_backtrace());
  }
  return bundle;
}

Heatmap grad_cam_from_bundle(const ActivationBundle& bundle, int out_height, int out_width) {
  const auto& a = bundle.activations;
  const auto& g = bundle.gradients;
  if (!a.defined() || !g.defined() || a.dim() != 3 || a.sizes() != g.sizes()) {
    throw Error(ErrorCode::ShapeMismatch, "activations and gradients must both be K x h x w");
  }
  if (out_height <= 0 || out_width <= 0) {
    throw Error(ErrorCode::InvalidArgument, "output size must be positive");
  }
  const auto acts = a.to(torch::kDouble);
  const auto weights = g.to(torch::kDouble).mean({1, 2});
  const auto raw = torch::relu((weights.view({-1, 1, 1}) * acts).sum(0));

  torch::Tensor upsampled = raw;
  if (raw.size(0) != out_height || raw.size(1) != out_width) {
    upsampled = F::interpolate(raw.unsqueeze(0).unsqueeze(0), F::InterpolateFuncOptions()
                                                                   .size(std::vector<std::int64_t>{out_height, out_width})
                                                                   .mode(torch::kBilinear)
                                                                   .align_corners(false))
                    .squeeze(0)
                    .squeeze(0);
  }
  Heatmap h;
  h.values = normalize_by_max(upsampled.clamp_min(0.0));
  h.raw = raw;
  h.source = HeatmapSource::grad_cam;
  h.target_class = bundle.target_class;
  return h;
}

Heatmap grad_cam(const ClassifierModel& model, const ImageTensor& img, std::optional<std::int64_t> target_class,
                 std::optional<std::string> layer) {
  const auto bundle = capture_activations(model, img, target_class, std::move(layer));
  return grad_cam_from_bundle(bundle, img.height(), img.width());
}

void OcclusionConfig::validate(int image_height, int image_width) const {
  if (stride < 1 || patch_size < 1 || stride > patch_size) {
    throw Error(ErrorCode::InvalidArgument, "occlusion needs 1 <= stride <= patch_size");
  }
  if (patch_size > image_height || patch_size > image_width) {
    throw Error(ErrorCode::PatchLargerThanImage, "patch of " + std::to_string(patch_size) +
                                                     " px exceeds the image side");
  }
  if (!(baseline_value >= 0.0F && baseline_value <= 1.0F)) {
    throw Error(ErrorCode::InvalidArgument, "baseline_value must lie in [0, 1]");
  }
}

std::vector<int> occlusion_offsets(int extent, int patch_size, int stride) {
  std::vector<int> offsets;
  int pos = 0;
  for (; pos + patch_size <= extent; pos += stride) {
    offsets.push_back(pos);
  }
  if (offsets.empty() || offsets.back() + patch_size < extent) {
    offsets.push_back(pos);
  }
  return offsets;
}

Heatmap occlusion_sensitivity(const ClassifierModel& model, const ImageTensor& img, const OcclusionConfig& cfg,
                              std::optional<std::int64_t> target_class) {
  const int h = img.height();
  const int w = img.width();
  cfg.validate(h, w);

  const auto clean = model.predict_proba(img.batch())[0].to(torch::kDouble);
  const std::int64_t target = target_class ? *target_class : argmax_lowest(clean);
  check_target(target, model.num_classes());
  const double p0 = clean[target].item<double>();

  auto accum = torch::zeros({h, w}, torch::kDouble);
  auto count = torch::zeros({h, w}, torch::kDouble);
  for (int y : occlusion_offsets(h, cfg.patch_size, cfg.stride)) {
    const int y_end = std::min(h, y + cfg.patch_size);
    for (int x : occlusion_offsets(w, cfg.patch_size, cfg.stride)) {
      const int x_end = std::min(w, x + cfg.patch_size);
      auto occluded = img.tensor().clone();
      occluded.slice(1, y, y_end).slice(2, x, x_end).fill_(cfg.baseline_value);
      const double p = model.predict_proba(occluded.unsqueeze(0))[0][target].item<double>();
      const double drop = std::max(p0 - p, 0.0);

      auto region = accum.slice(0, y, y_end).slice(1, x, x_end);
      if (cfg.overlap == OverlapMode::average) {
        region.add_(drop);
        count.slice(0, y, y_end).slice(1, x, x_end).add_(1.0);
      } else {
        region.clamp_min_(drop);
      }
    }
  }

  Heatmap heat;
  heat.raw = cfg.overlap == OverlapMode::average ? accum / count : accum;
  heat.values = normalize_by_max(heat.raw);
  heat.source = HeatmapSource::occlusion;
  heat.target_class = target;
  return heat;
}

std::array<float, 3> heat_color(float heat) {
  static constexpr std::array<std::array<float, 3>, 5> kStops{{
      {0.0F, 0.0F, 1.0F},
      {0.0F, 1.0F, 1.0F},
      {0.0F, 1.0F, 0.0F},
      {1.0F, 1.0F, 0.0F},
      {1.0F, 0.0F, 0.0F},
  }};
  const float t = std::clamp(heat, 0.0F, 1.0F) * 4.0F;
  const int lo = std::min(3, static_cast<int>(std::floor(t)));
  const float frac = t - static_cast<float>(lo);
  std::array<float, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    rgb[c] = kStops[lo][c] + frac * (kStops[lo + 1][c] - kStops[lo][c]);
  }
  return rgb;
}

ImageTensor overlay(const Heatmap& heatmap, const ImageTensor& img, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  }
  if (heatmap.height() != img.height() || heatmap.width() != img.width()) {
    throw Error(ErrorCode::ShapeMismatch, "heatmap is " + std::to_string(heatmap.height()) + "x" +
                                              std::to_string(heatmap.width()) + " but the image is " +
                                              std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  if (alpha == 0.0) {
    return img;
  }
  const auto heat = heatmap.values.to(torch::kFloat).contiguous();
  auto colors = torch::empty({3, img.height(), img.width()}, torch::kFloat);
  const auto* hp = heat.data_ptr<float>();
  auto acc = colors.accessor<float, 3>();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto rgb = heat_color(hp[y * img.width() + x]);
      for (int c = 0; c < 3; ++c) acc[c][y][x] = rgb[static_cast<std::size_t>(c)];
    }
  }
  const auto a = static_cast<float>(alpha);
  return ImageTensor::from_tensor(((1.0F - a) * img.tensor() + a * colors).clamp(0.0, 1.0));
}

void write_heatmap_png(const Heatmap& heatmap, const std::filesystem::path& path) {
  const auto bytes = (heatmap.values.to(torch::kDouble) * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
  cv::Mat gray(heatmap.height(), heatmap.width(), CV_8UC1, bytes.data_ptr<std::uint8_t>());
  if (!cv::imwrite(path.string(), gray)) {
    throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  }
}

}  // namespace tealeaf
