#include "support.hpp"

#include <atomic>
#include <chrono>
#include <sstream>

#include <unistd.h>

namespace tealeaf::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::ostringstream name;
  name << "tealeaf-test-" << ::getpid() << '-' << counter++ << '-'
       << std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() / name.str();
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

TinyConvBackbone::TinyConvBackbone(std::int64_t width) : width_(width) {
  conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, width, 3).padding(1)));
  conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width, 3).padding(1)));
}

torch::Tensor TinyConvBackbone::forward(torch::Tensor x) { return torch::relu(conv2_(torch::relu(conv1_(x)))); }

PixelLinearBackbone::PixelLinearBackbone(std::int64_t channels) : channels_(channels) {
  proj_ = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, channels, 1).bias(false)));
}

ClassifierModel make_model(std::shared_ptr<Backbone> backbone, std::int64_t num_classes, int height, int width) {
  auto module = std::make_shared<ClassifierModule>(std::move(backbone), num_classes);
  module->eval();
  PreprocessConfig pre;
  pre.height = height;
  pre.width = width;
  return ClassifierModel(std::move(module), std::nullopt, pre);
}

std::vector<std::string> tea_classes() {
  return {"Algal leaf spot", "Brown blight", "Gray blight", "Green mirid bug", "Healthy leaf", "Helopeltis",
          "Red spider"};
}

ImageTensor random_image(int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  auto t = torch::empty({3, height, width});
  auto* p = t.data_ptr<float>();
  for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = u(rng);
  return ImageTensor::from_tensor(t);
}

void write_color_dataset(const fs::path& root, const std::vector<std::string>& classes,
                         const std::vector<int>& per_class, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto dir = root / classes[c];
    fs::create_directories(dir);
    // Distinct hues spread around the color wheel.
    const float base[3] = {static_cast<float>((c * 37) % 7) / 6.0F, static_cast<float>((c * 3) % 7) / 6.0F,
                           static_cast<float>((c * 5 + 2) % 7) / 6.0F};
    for (int n = 0; n < per_class[c]; ++n) {
      auto t = torch::empty({3, size, size});
      auto acc = t.accessor<float, 3>();
      for (int ch = 0; ch < 3; ++ch) {
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) {
            acc[ch][y][x] = std::clamp(0.8F * base[ch] + 0.2F * u(rng), 0.0F, 1.0F);
          }
        }
      }
      std::ostringstream name;
      name << "img_" << n << ".png";
      write_png(ImageTensor::from_tensor(t), dir / name.str());
    }
  }
}

ImageTensor watermark_image(int size, int box_size, int cls, std::mt19937_64& rng, Box& box) {
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  std::uniform_int_distribution<int> pos(0, size - box_size);
  auto t = torch::empty({3, size, size});
  auto acc = t.accessor<float, 3>();
  // Gray noise background: no color cue outside the box.
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float g = 0.3F + 0.4F * u(rng);
      for (int ch = 0; ch < 3; ++ch) acc[ch][y][x] = g;
    }
  }
  box = {pos(rng), pos(rng), box_size};
  const float color[2][3] = {{1.0F, 0.0F, 0.0F}, {0.0F, 0.0F, 1.0F}};
  for (int y = box.y; y < box.y + box_size; ++y) {
    for (int x = box.x; x < box.x + box_size; ++x) {
      for (int ch = 0; ch < 3; ++ch) acc[ch][y][x] = color[cls][ch];
    }
  }
  return ImageTensor::from_tensor(t);
}

DatasetIndex synthetic_index(const std::vector<std::size_t>& per_class) {
  DatasetIndex index;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    names.push_back("class_" + std::to_string(c));
    for (std::size_t n = 0; n < per_class[c]; ++n) {
      std::ostringstream p;
      p << "/data/" << names.back() << "/img_" << n << ".png";
      index.items.push_back({p.str(), static_cast<int>(c), false});
    }
  }
  index.registry = ClassRegistry(names);
  return index;
}

}  // namespace tealeaf::testing
