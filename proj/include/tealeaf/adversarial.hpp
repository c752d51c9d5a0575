#pragma once

#include <filesystem>
#include <vector>

#include <torch/types.h>

#include "tealeaf/dataset.hpp"
#include "tealeaf/image.hpp"
#include "tealeaf/model.hpp"
#include "tealeaf/trainer.hpp"

namespace tealeaf {

struct AdversarialConfig {
  double epsilon = 0.1;              // L-infinity budget in [0, 1] pixel units
  double adversarial_fraction = 0.5; // share of each training batch replaced
  std::vector<double> sweep_epsilons{0.0, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2};

  void validate() const;
};

/// x' = clamp(x + epsilon * sign(dL/dx), 0, 1) with L the cross-entropy of
/// the true class. Gradients are taken with the model in eval mode; the
/// model's parameters are left untouched. A zero gradient returns x.
/// Throws GradientUnavailable when autograd cannot differentiate the model.
ImageTensor fgsm_perturb(const ClassifierModel& model, const ImageTensor& img, std::int64_t true_class, double epsilon);

/// Batched form over an N x 3 x H x W tensor. Samples are independent (eval
/// mode), so each row matches fgsm_perturb on that image up to floating-point
/// reassociation inside batched kernels.
torch::Tensor fgsm_perturb_batch(const ClassifierModel& model, const torch::Tensor& images, const torch::Tensor& labels,
                                 double epsilon);

/// Gradient of the cross-entropy at `true_class` with respect to the input.
torch::Tensor input_gradient(const ClassifierModel& model, const torch::Tensor& images, const torch::Tensor& labels);

/// train() with the first round(fraction * batch) items of every batch
/// replaced by FGSM counterparts generated against the current weights.
TrainingHistory adversarial_train(ClassifierModel& model, const SplitSet& splits, const TrainConfig& train_cfg,
                                  const AdversarialConfig& adv_cfg, TrainOptions options = {});

struct SweepRow {
  double epsilon = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  int optimal_epochs = 0;

  bool operator==(const SweepRow&) const = default;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  bool operator==(const SweepReport&) const = default;
};

struct SweepOptions {
  BuildOptions build;
  TrainOptions train;
  // Called with each finished row (for progress output).
  std::function<void(const SweepRow&)> on_row;
};

/// One fresh model per epsilon (same seed), adversarially trained; each row
/// holds the best-epoch validation loss/accuracy and that epoch number.
SweepReport epsilon_sweep(ArchitectureId arch, const SplitSet& splits, const TrainConfig& train_cfg,
                          const AdversarialConfig& adv_cfg, const SweepOptions& options = {});

/// Same sweep over a caller-supplied model factory (used for custom or
/// reduced backbones).
SweepReport epsilon_sweep(const std::function<ClassifierModel()>& make_model, const SplitSet& splits,
                          const TrainConfig& train_cfg, const AdversarialConfig& adv_cfg, const SweepOptions& options = {});

// Sweep file: JSON lines, header {"columns": [...]}, one row per epsilon
// with epsilon, val_loss, val_accuracy, optimal_epochs.
void write_sweep_report(const SweepReport& report, const std::filesystem::path& path);
SweepReport read_sweep_report(const std::filesystem::path& path);
std::string render_sweep_table(const SweepReport& report);

}  // namespace tealeaf
