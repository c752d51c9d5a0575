#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <torch/nn/module.h>
#include <torch/nn/modules/linear.h>

#include "tealeaf/dataset.hpp"
#include "tealeaf/image.hpp"

namespace tealeaf {

enum class ArchitectureId { densenet201, mobilenet_v2, inception_v3 };

std::string_view to_string(ArchitectureId arch) noexcept;
/// Throws UnknownArchitecture.
ArchitectureId parse_architecture(std::string_view name);

/// Feature extractor ending at the last convolutional stage. forward() maps
/// N x 3 x H x W images to the N x C x h x w activation map that Grad-CAM
/// inspects.
class Backbone : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(torch::Tensor x) = 0;
  virtual std::int64_t out_channels() const = 0;
  /// Canonical name of the layer whose output forward() returns.
  virtual std::string feature_layer() const = 0;
};

/// Backbone + global-average-pool + dense layer. Produces logits;
/// probabilities() applies softmax.
class ClassifierModule : public torch::nn::Module {
 public:
  ClassifierModule(std::shared_ptr<Backbone> backbone, std::int64_t num_classes);

  torch::Tensor forward(torch::Tensor images);
  torch::Tensor features(torch::Tensor images);
  torch::Tensor logits_from_features(const torch::Tensor& features);

  std::shared_ptr<Backbone> backbone() const { return backbone_; }
  torch::nn::Linear& head() { return head_; }
  std::int64_t num_classes() const noexcept { return num_classes_; }

  void set_input_standardization(bool enabled) { standardize_ = enabled; }
  bool input_standardization() const noexcept { return standardize_; }

 private:
  std::shared_ptr<Backbone> backbone_;
  torch::nn::Linear head_{nullptr};
  std::int64_t num_classes_;
  bool standardize_ = false;
};

/// A classifier plus the metadata needed to reproduce its inputs.
/// Copies share the underlying module.
class ClassifierModel {
 public:
  ClassifierModel(std::shared_ptr<ClassifierModule> module, std::optional<ArchitectureId> arch,
                  PreprocessConfig preprocess);

  ClassifierModule& module() const { return *module_; }
  std::shared_ptr<ClassifierModule> module_ptr() const { return module_; }
  std::optional<ArchitectureId> architecture() const noexcept { return arch_; }
  std::int64_t num_classes() const noexcept { return module_->num_classes(); }
  const PreprocessConfig& preprocess() const noexcept { return preprocess_; }
  std::string feature_layer() const { return module_->backbone()->feature_layer(); }

  /// Logits for a batch; no gradient tracking, module left in eval mode.
  torch::Tensor predict_logits(const torch::Tensor& batch) const;
  /// Softmax probabilities for a batch; rows sum to 1.
  torch::Tensor predict_proba(const torch::Tensor& batch) const;
  torch::Tensor predict_proba(const ImageTensor& img) const { return predict_proba(img.batch()).squeeze(0); }

  /// Deep copy of the weights and buffers into a fresh module.
  ClassifierModel clone() const;

 private:
  std::shared_ptr<ClassifierModule> module_;
  std::optional<ArchitectureId> arch_;
  PreprocessConfig preprocess_;
};

struct BuildOptions {
  bool pretrained = false;
  // Directory holding `<arch>.pt` weight files produced by
  // tools/export_pretrained_weights.py. Falls back to $TEALEAF_WEIGHTS_DIR.
  std::optional<std::filesystem::path> weights_dir;
  PreprocessConfig preprocess;
};

/// Throws InvalidArgument for num_classes < 2, WeightsUnavailable when
/// pretrained weights are requested but cannot be found or applied.
ClassifierModel build_model(ArchitectureId arch, std::int64_t num_classes, const BuildOptions& options = {});

/// Builds a backbone alone (no head), torchvision-compatible parameter names.
std::shared_ptr<Backbone> build_backbone(ArchitectureId arch);

/// Copies matching backbone tensors from a torch.save'd state dict (Python
/// side keys, e.g. "features.conv0.weight"). Classifier tensors are ignored.
/// Returns the number of tensors copied; throws WeightsUnavailable on a
/// missing key or a shape mismatch.
std::size_t load_backbone_weights(Backbone& backbone, const std::filesystem::path& state_dict_file);

/// Argmax with ties broken toward the lowest class index.
std::int64_t argmax_lowest(const torch::Tensor& row);

// Checkpoints: a single torch archive holding every parameter and buffer
// plus a JSON metadata string (architecture, num_classes, class names,
// preprocess config, code version).
void save_checkpoint(const ClassifierModel& model, const ClassRegistry& registry,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  ClassifierModel model;
  ClassRegistry registry;
  std::string code_version;
};

/// Throws CorruptCheckpoint or RegistryMismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
/// As above, additionally requiring the stored classes to match `expected`.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ClassRegistry& expected);

std::string code_version();

}  // namespace tealeaf
