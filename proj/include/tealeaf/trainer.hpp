#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <torch/types.h>

#include "tealeaf/dataset.hpp"
#include "tealeaf/image.hpp"
#include "tealeaf/model.hpp"

namespace tealeaf {

/// Optimization settings. Loss is always categorical cross-entropy and the
/// optimizer is always Adam.
struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  int max_epochs = 50;
  int patience = 10;
  double min_delta = 0.0;
  bool freeze_backbone = false;
  std::uint64_t seed = 0;

  /// Per-architecture defaults: lr 1e-4 / 1e-5 (inception_v3), patience
  /// 10 / 5 (mobilenet_v2), batch 32, 50 epochs.
  static TrainConfig preset(ArchitectureId arch);
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> records;
  int best_epoch = 0;  // epoch with the lowest val_loss; 0 when empty
  bool stopped_early = false;

  const EpochRecord& best() const;
  bool operator==(const TrainingHistory&) const = default;
};

struct EarlyStopState {
  double best_val_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  int patience = 10;
  double min_delta = 0.0;
};

struct EarlyStopStep {
  EarlyStopState state;
  bool improved = false;
  bool stop = false;
};

/// Improvement means val_loss < best - min_delta (strict). Otherwise the
/// counter increments and stop is raised once it reaches patience.
EarlyStopStep early_stopping_update(const EarlyStopState& state, double val_loss);

struct SplitMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and accuracy over `items`, clean preprocessing.
SplitMetrics measure_split(const ClassifierModel& model, std::span<const LabeledItem> items, int batch_size = 32);

struct TrainHooks {
  // Replaces the validation pass; receives the 1-based epoch.
  std::function<SplitMetrics(const ClassifierModel&, int epoch)> validate;
  // Rewrites a training batch before the forward pass (adversarial mixing).
  std::function<void(ClassifierModel&, torch::Tensor& images, const torch::Tensor& labels)> transform_batch;
  // Called after each optimizer step with the indices into splits.train.
  std::function<void(int epoch, std::span<const std::size_t> item_indices)> on_batch;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainOptions {
  AugmentConfig augment;
  // Keep decoded, resized training images in memory between epochs.
  bool cache_images = false;
  TrainHooks hooks;
};

/// Trains `model` in place on splits.train (augmented) with per-epoch
/// validation on splits.val (clean), early stopping, and restoration of the
/// best-epoch weights before returning. Throws EmptySplit, NonFiniteLoss.
TrainingHistory train(ClassifierModel& model, const SplitSet& splits, const TrainConfig& cfg,
                      const TrainOptions& options = {});

// History file: JSON lines. Header {"columns": [...], "best_epoch",
// "stopped_early"}, then one record per epoch with the five columns.
void export_history(const TrainingHistory& history, const std::filesystem::path& path);
TrainingHistory load_history(const std::filesystem::path& path);

}  // namespace tealeaf
