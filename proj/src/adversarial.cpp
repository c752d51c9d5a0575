#include "tealeaf/adversarial.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <torch/torch.h>

#include "json.hpp"
#include "tealeaf/error.hpp"
#include "tealeaf/log.hpp"

namespace tealeaf {

using nlohmann::json;

void AdversarialConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "epsilon must lie in [0, 1]");
  }
  if (!(adversarial_fraction >= 0.0 && adversarial_fraction <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "adversarial_fraction must lie in [0, 1]");
  }
  for (double e : sweep_epsilons) {
    if (!(e >= 0.0 && e <= 1.0)) {
      throw Error(ErrorCode::ConfigInvalid, "sweep_epsilons entries must lie in [0, 1]");
    }
  }
}

torch::Tensor input_gradient(const ClassifierModel& model, const torch::Tensor& images, const torch::Tensor& labels) {
  auto& module = model.module();
  const bool was_training = module.is_training();
  module.eval();
  torch::Tensor grad;
  try {
    torch::AutoGradMode enable_grad(true);
    auto x = images.detach().clone().requires_grad_(true);
    const auto logits = module.forward(x);
    const auto loss = torch::nn::functional::cross_entropy(
        logits, labels, torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kSum));
    if (loss.requires_grad()) {
      grad = torch::autograd::grad({loss}, {x}, /*grad_outputs=*/{}, /*retain_graph=*/false,
                                   /*create_graph=*/false, /*allow_unused=*/true)[0];
    }
  } catch (const c10::Error& e) {
    if (was_training) module.train();
    throw Error(ErrorCode::GradientUnavailable, e.what_without_backtrace());
  }
  if (was_training) module.train();
  if (!grad.defined()) {
    // The loss does not depend on the input at all.
    grad = torch::zeros_like(images);
  }
  return grad;
}

torch::Tensor fgsm_perturb_batch(const ClassifierModel& model, const torch::Tensor& images, const torch::Tensor& labels,
                                 double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "epsilon must lie in [0, 1]");
  }
  if (images.dim() != 4 || labels.dim() != 1 || images.size(0) != labels.size(0)) {
    throw Error(ErrorCode::ShapeMismatch, "expected N x 3 x H x W images and N labels");
  }
  const auto k = model.num_classes();
  if (labels.numel() > 0 && (labels.min().item<std::int64_t>() < 0 || labels.max().item<std::int64_t>() >= k)) {
    throw Error(ErrorCode::LabelOutOfRange, "true class outside [0, num_classes)");
  }
  if (epsilon == 0.0) {
    return images.clone();
  }
  const auto grad = input_gradient(model, images, labels);
  return (images + epsilon * grad.sign()).clamp(0.0, 1.0).detach();
}

ImageTensor fgsm_perturb(const ClassifierModel& model, const ImageTensor& img, std::int64_t true_class, double epsilon) {
  const auto label = torch::tensor({true_class}, torch::kLong);
  return ImageTensor::from_tensor(fgsm_perturb_batch(model, img.batch(), label, epsilon).squeeze(0));
}

TrainingHistory adversarial_train(ClassifierModel& model, const SplitSet& splits, const TrainConfig& train_cfg,
                                  const AdversarialConfig& adv_cfg, TrainOptions options) {
  adv_cfg.validate();
  auto inner = options.hooks.transform_batch;
  const double epsilon = adv_cfg.epsilon;
  const double fraction = adv_cfg.adversarial_fraction;
  options.hooks.transform_batch = [inner, epsilon, fraction](ClassifierModel& m, torch::Tensor& images,
                                                             const torch::Tensor& labels) {
    const auto batch = images.size(0);
    const auto count = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(batch)));
    if (count > 0 && epsilon > 0.0) {
      auto adversarial = fgsm_perturb_batch(m, images.slice(0, 0, count), labels.slice(0, 0, count), epsilon);
      images = torch::cat({adversarial, images.slice(0, count)}, 0);
    }
    if (inner) inner(m, images, labels);
  };
  return train(model, splits, train_cfg, options);
}

SweepReport epsilon_sweep(const std::function<ClassifierModel()>& make_model, const SplitSet& splits,
                          const TrainConfig& train_cfg, const AdversarialConfig& adv_cfg, const SweepOptions& options) {
  adv_cfg.validate();
  if (adv_cfg.sweep_epsilons.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "sweep_epsilons must not be empty");
  }
  SweepReport report;
  for (double eps : adv_cfg.sweep_epsilons) {
    log::info("sweep: training with epsilon ", eps);
    torch::manual_seed(train_cfg.seed);
    auto model = make_model();
    AdversarialConfig run_cfg = adv_cfg;
    run_cfg.epsilon = eps;
    const auto history = adversarial_train(model, splits, train_cfg, run_cfg, options.train);
    const auto& best = history.best();
    SweepRow row{eps, best.val_loss, best.val_accuracy, history.best_epoch};
    report.rows.push_back(row);
    if (options.on_row) options.on_row(row);
  }
  return report;
}

SweepReport epsilon_sweep(ArchitectureId arch, const SplitSet& splits, const TrainConfig& train_cfg,
                          const AdversarialConfig& adv_cfg, const SweepOptions& options) {
  const auto num_classes = static_cast<std::int64_t>(splits.registry.count());
  return epsilon_sweep([&] { return build_model(arch, num_classes, options.build); }, splits, train_cfg, adv_cfg,
                       options);
}

void write_sweep_report(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoFailure, "cannot write sweep report " + path.string());
  }
  json header = {{"format", "tealeaf-sweep"},
                 {"columns", {"epsilon", "val_loss", "val_accuracy", "optimal_epochs"}}};
  out << header.dump() << '\n';
  for (const auto& r : report.rows) {
    json rec = {{"epsilon", r.epsilon},
                {"val_loss", r.val_loss},
                {"val_accuracy", r.val_accuracy},
                {"optimal_epochs", r.optimal_epochs}};
    out << rec.dump() << '\n';
  }
  if (!out) {
    throw Error(ErrorCode::IoFailure, "failed writing sweep report " + path.string());
  }
}

SweepReport read_sweep_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoFailure, "cannot open sweep report " + path.string());
  }
  SweepReport report;
  std::string line;
  try {
    if (!std::getline(in, line) || json::parse(line).at("format") != "tealeaf-sweep") {
      throw Error(ErrorCode::IoFailure, path.string() + " is not a sweep report");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      report.rows.push_back({rec.at("epsilon").get<double>(), rec.at("val_loss").get<double>(),
                             rec.at("val_accuracy").get<double>(), rec.at("optimal_epochs").get<int>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoFailure, "malformed sweep report " + path.string() + ": " + e.what());
  }
  return report;
}

std::string render_sweep_table(const SweepReport& report) {
  std::ostringstream os;
  os << "Epsilon  Validation Loss  Validation Accuracy  Optimal Epochs\n";
  for (const auto& r : report.rows) {
    os << std::left << std::setw(7) << r.epsilon << "  " << std::fixed << std::setprecision(4) << std::right
       << std::setw(15) << r.val_loss << "  " << std::setw(19) << r.val_accuracy << "  " << std::setw(14)
       << r.optimal_epochs << '\n';
    os.unsetf(std::ios::fixed);
    os << std::setprecision(6);
  }
  return os.str();
}

}  // namespace tealeaf
