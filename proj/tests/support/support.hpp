#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "tealeaf/dataset.hpp"
#include "tealeaf/image.hpp"
#include "tealeaf/model.hpp"

namespace tealeaf::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Features are the input image itself (3 channels at full resolution).
class IdentityBackbone : public Backbone {
 public:
  torch::Tensor forward(torch::Tensor x) override { return x; }
  std::int64_t out_channels() const override { return 3; }
  std::string feature_layer() const override { return "input"; }
};

/// Two 3x3 convolutions with ReLU at full resolution.
class TinyConvBackbone : public Backbone {
 public:
  explicit TinyConvBackbone(std::int64_t width = 16);
  torch::Tensor forward(torch::Tensor x) override;
  std::int64_t out_channels() const override { return width_; }
  std::string feature_layer() const override { return "conv2"; }

 private:
  std::int64_t width_;
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};

/// Mean over channels of a per-pixel linear map, pooled by the head. Gives a
/// model whose class score is a fixed linear function of the pixels.
class PixelLinearBackbone : public Backbone {
 public:
  explicit PixelLinearBackbone(std::int64_t channels = 2);
  torch::Tensor forward(torch::Tensor x) override { return proj_->forward(x); }
  std::int64_t out_channels() const override { return channels_; }
  std::string feature_layer() const override { return "proj"; }
  torch::nn::Conv2d& proj() { return proj_; }

 private:
  std::int64_t channels_;
  torch::nn::Conv2d proj_{nullptr};
};

ClassifierModel make_model(std::shared_ptr<Backbone> backbone, std::int64_t num_classes, int height, int width);

/// The seven teaLeafBD class names in registry (sorted directory) order.
std::vector<std::string> tea_classes();

ImageTensor random_image(int height, int width, std::mt19937_64& rng);

/// Writes `per_class[c]` PNGs per class under root/<name>/. Each class has
/// its own base color plus noise, so the task is learnable.
void write_color_dataset(const std::filesystem::path& root, const std::vector<std::string>& classes,
                         const std::vector<int>& per_class, int size, std::uint64_t seed);

struct Box {
  int y = 0;
  int x = 0;
  int size = 0;
  bool contains(int row, int col) const { return row >= y && row < y + size && col >= x && col < x + size; }
};

/// Noise background with one colored square; the square's color is the class
/// (red for class 0, blue for class 1).
ImageTensor watermark_image(int size, int box_size, int cls, std::mt19937_64& rng, Box& box);

/// Index with fake paths, for split tests that never touch the filesystem.
DatasetIndex synthetic_index(const std::vector<std::size_t>& per_class);

}  // namespace tealeaf::testing
