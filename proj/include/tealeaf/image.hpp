#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core/mat.hpp>
#include <torch/types.h>

namespace tealeaf {

struct PreprocessConfig {
  int height = 224;
  int width = 224;
  // Standardize with ImageNet channel mean/std inside the model. The image
  // tensors themselves always stay in [0, 1].
  bool imagenet_normalization = false;

  void validate() const;
  bool operator==(const PreprocessConfig&) const = default;
};

struct AugmentConfig {
  bool horizontal_flip = true;
  double rotation_degrees = 15.0;
  double zoom_fraction = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

/// An RGB image with values in [0, 1], stored planar as a contiguous float32
/// tensor of shape {3, height, width}.
class ImageTensor {
 public:
  ImageTensor() = default;

  /// Validates shape, dtype and value range; throws ShapeMismatch or
  /// InvalidArgument.
  static ImageTensor from_tensor(torch::Tensor chw);
  /// 8-bit RGB (CV_8UC3) to [0, 1].
  static ImageTensor from_rgb8(const cv::Mat& rgb);
  static ImageTensor filled(int height, int width, float value);

  int height() const noexcept { return static_cast<int>(data_.size(1)); }
  int width() const noexcept { return static_cast<int>(data_.size(2)); }
  const torch::Tensor& tensor() const noexcept { return data_; }
  bool empty() const noexcept { return !data_.defined(); }

  /// 1 x 3 x H x W view for model input.
  torch::Tensor batch() const { return data_.unsqueeze(0); }

  /// Interleaved H x W x 3 float32 copy.
  cv::Mat to_mat() const;
  /// 8-bit RGB rendering (rounded).
  cv::Mat to_rgb8() const;

  bool equals(const ImageTensor& other) const;

 private:
  explicit ImageTensor(torch::Tensor data) : data_(std::move(data)) {}
  torch::Tensor data_;
};

/// Decodes JPEG/PNG bytes to 8-bit RGB. Grayscale is replicated to three
/// channels and alpha is dropped. Throws UndecodableImage.
cv::Mat decode_rgb8(std::span<const std::byte> bytes);
cv::Mat read_rgb8(const std::filesystem::path& path);

/// Bilinear resize to the configured size, then scaling to [0, 1].
ImageTensor preprocess(const cv::Mat& rgb8, const PreprocessConfig& cfg);
ImageTensor load_and_preprocess(const std::filesystem::path& path, const PreprocessConfig& cfg);
ImageTensor preprocess_bytes(std::span<const std::byte> bytes, const PreprocessConfig& cfg);

/// One concrete draw of the augmentation parameters.
struct AugmentDraw {
  bool flip = false;
  double rotation_degrees = 0.0;
  double zoom = 1.0;
};

AugmentDraw sample_augment(const AugmentConfig& cfg, std::mt19937_64& rng);

/// Flip, then rotation about the center (reflect padding), then zoom about
/// the center (crop or reflect-pad back to size); clamped to [0, 1]. An
/// identity draw returns an exact copy.
ImageTensor apply_augment(const ImageTensor& img, const AugmentDraw& draw);

inline ImageTensor augment(const ImageTensor& img, const AugmentConfig& cfg, std::mt19937_64& rng) {
  return apply_augment(img, sample_augment(cfg, rng));
}

ImageTensor horizontal_flip(const ImageTensor& img);

std::vector<std::uint8_t> encode_png(const ImageTensor& img);
void write_png(const ImageTensor& img, const std::filesystem::path& path);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

}  // namespace tealeaf
