#include "tealeaf/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "tealeaf/error.hpp"

namespace tealeaf {

void PreprocessConfig::validate() const {
  if (height <= 0 || width <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "height and width must be positive");
  }
}

void AugmentConfig::validate() const {
  if (!(rotation_degrees >= 0.0 && rotation_degrees <= 180.0)) {
    throw Error(ErrorCode::ConfigInvalid, "rotation_degrees must be in [0, 180]");
  }
  if (!(zoom_fraction >= 0.0 && zoom_fraction <= 0.5)) {
    throw Error(ErrorCode::ConfigInvalid, "zoom_fraction must be in [0, 0.5]");
  }
}

ImageTensor ImageTensor::from_tensor(torch::Tensor chw) {
  if (!chw.defined() || chw.dim() != 3 || chw.size(0) != 3 || chw.size(1) <= 0 || chw.size(2) <= 0) {
    throw Error(ErrorCode::ShapeMismatch, "image tensor must have shape {3, H, W}");
  }
  if (!chw.is_floating_point()) {
    throw Error(ErrorCode::InvalidArgument, "image tensor must be floating point");
  }
  auto data = chw.detach().to(torch::kCPU, torch::kFloat32).contiguous().clone();
  if (!torch::isfinite(data).all().item<bool>() || data.min().item<float>() < 0.0F ||
      data.max().item<float>() > 1.0F) {
    throw Error(ErrorCode::InvalidArgument, "image values must lie in [0, 1]");
  }
  return ImageTensor(std::move(data));
}

ImageTensor ImageTensor::from_rgb8(const cv::Mat& rgb) {
  if (rgb.empty() || rgb.type() != CV_8UC3) {
    throw Error(ErrorCode::InvalidArgument, "expected an 8-bit 3-channel image");
  }
  cv::Mat scaled;
  rgb.convertTo(scaled, CV_32FC3, 1.0 / 255.0);
  auto hwc = torch::from_blob(scaled.data, {scaled.rows, scaled.cols, 3}, torch::kFloat32);
  return ImageTensor(hwc.permute({2, 0, 1}).contiguous().clone());
}

ImageTensor ImageTensor::filled(int height, int width, float value) {
  if (height <= 0 || width <= 0 || !(value >= 0.0F && value <= 1.0F)) {
    throw Error(ErrorCode::InvalidArgument, "filled image needs positive size and a value in [0, 1]");
  }
  return ImageTensor(torch::full({3, height, width}, value, torch::kFloat32));
}

cv::Mat ImageTensor::to_mat() const {
  auto hwc = data_.permute({1, 2, 0}).contiguous();
  cv::Mat view(height(), width(), CV_32FC3, hwc.data_ptr<float>());
  return view.clone();
}

cv::Mat ImageTensor::to_rgb8() const {
  cv::Mat out;
  to_mat().convertTo(out, CV_8UC3, 255.0);
  return out;
}

bool ImageTensor::equals(const ImageTensor& other) const {
  if (empty() || other.empty()) {
    return empty() == other.empty();
  }
  return torch::equal(data_, other.data_);
}

cv::Mat decode_rgb8(std::span<const std::byte> bytes) {
  if (bytes.empty()) {
    throw Error(ErrorCode::UndecodableImage, "empty image payload");
  }
  cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1,
                 const_cast<std::byte*>(bytes.data()));
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(buffer, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::UndecodableImage, e.what());
  }
  if (bgr.empty()) {
    throw Error(ErrorCode::UndecodableImage, "not a decodable JPEG/PNG image");
  }
  if (bgr.depth() != CV_8U) {
    bgr.convertTo(bgr, CV_8U, 1.0 / 257.0);
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [](char c) { return static_cast<std::byte>(c); });
  return out;
}

cv::Mat read_rgb8(const std::filesystem::path& path) {
  std::vector<std::byte> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error&) {
    throw Error(ErrorCode::UndecodableImage, "cannot read " + path.string());
  }
  try {
    return decode_rgb8(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::UndecodableImage, path.string() + ": " + e.what());
  }
}

ImageTensor preprocess(const cv::Mat& rgb8, const PreprocessConfig& cfg) {
  cfg.validate();
  cv::Mat resized = rgb8;
  if (rgb8.rows != cfg.height || rgb8.cols != cfg.width) {
    cv::resize(rgb8, resized, cv::Size(cfg.width, cfg.height), 0.0, 0.0, cv::INTER_LINEAR);
  }
  return ImageTensor::from_rgb8(resized);
}

ImageTensor load_and_preprocess(const std::filesystem::path& path, const PreprocessConfig& cfg) {
  return preprocess(read_rgb8(path), cfg);
}

ImageTensor preprocess_bytes(std::span<const std::byte> bytes, const PreprocessConfig& cfg) {
  return preprocess(decode_rgb8(bytes), cfg);
}

AugmentDraw sample_augment(const AugmentConfig& cfg, std::mt19937_64& rng) {
  // Always consume the same number of draws so that toggling one transform
  // does not shift the stream seen by the others.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double flip_u = unit(rng);
  const double rot_u = unit(rng);
  const double zoom_u = unit(rng);

  AugmentDraw draw;
  draw.flip = cfg.horizontal_flip && flip_u < 0.5;
  draw.rotation_degrees = cfg.rotation_degrees * (2.0 * rot_u - 1.0);
  draw.zoom = 1.0 + cfg.zoom_fraction * (2.0 * zoom_u - 1.0);
  return draw;
}

ImageTensor horizontal_flip(const ImageTensor& img) {
  return ImageTensor::from_tensor(img.tensor().flip({2}));
}

namespace {

cv::Mat warp_about_center(const cv::Mat& src, double angle_degrees, double scale) {
  const cv::Point2f center(static_cast<float>(src.cols - 1) / 2.0F,
                           static_cast<float>(src.rows - 1) / 2.0F);
  const cv::Mat m = cv::getRotationMatrix2D(center, angle_degrees, scale);
  cv::Mat dst;
  cv::warpAffine(src, dst, m, src.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  return dst;
}

}  // namespace

ImageTensor apply_augment(const ImageTensor& img, const AugmentDraw& draw) {
  const bool rotate = draw.rotation_degrees != 0.0;
  const bool zoom = draw.zoom != 1.0;
  if (!rotate && !zoom) {
    return draw.flip ? horizontal_flip(img) : img;
  }

  cv::Mat mat = img.to_mat();
  if (draw.flip) {
    cv::flip(mat, mat, 1);
  }
  if (rotate) {
    mat = warp_about_center(mat, draw.rotation_degrees, 1.0);
  }
  if (zoom) {
    mat = warp_about_center(mat, 0.0, draw.zoom);
  }
  auto hwc = torch::from_blob(mat.data, {mat.rows, mat.cols, 3}, torch::kFloat32);
  return ImageTensor::from_tensor(hwc.permute({2, 0, 1}).clamp(0.0, 1.0));
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img) {
  cv::Mat bgr;
  cv::cvtColor(img.to_rgb8(), bgr, cv::COLOR_RGB2BGR);
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", bgr, out)) {
    throw Error(ErrorCode::IoFailure, "PNG encoding failed");
  }
  return out;
}

void write_png(const ImageTensor& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  }
}

}  // namespace tealeaf
