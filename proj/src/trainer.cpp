#include "tealeaf/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>

#include <torch/torch.h>

#include "json.hpp"
#include "tealeaf/error.hpp"
#include "tealeaf/log.hpp"
#include "tealeaf/metrics.hpp"
#include "tealeaf/random.hpp"

namespace tealeaf {

using nlohmann::json;

TrainConfig TrainConfig::preset(ArchitectureId arch) {
  TrainConfig cfg;
  switch (arch) {
    case ArchitectureId::densenet201:
      cfg.learning_rate = 1e-4;
      cfg.patience = 10;
      break;
    case ArchitectureId::mobilenet_v2:
      cfg.learning_rate = 1e-4;
      cfg.patience = 5;
      break;
    case ArchitectureId::inception_v3:
      cfg.learning_rate = 1e-5;
      cfg.patience = 10;
      break;
  }
  return cfg;
}

void TrainConfig::validate() const {
  if (batch_size < 1) {
    throw Error(ErrorCode::ConfigInvalid, "batch_size must be at least 1");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::ConfigInvalid, "learning_rate must be > 0");
  }
  if (max_epochs < 1) {
    throw Error(ErrorCode::ConfigInvalid, "max_epochs must be at least 1");
  }
  if (patience < 1 || patience > max_epochs) {
    throw Error(ErrorCode::ConfigInvalid, "patience must lie in [1, max_epochs]");
  }
  if (!(min_delta >= 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "min_delta must be >= 0");
  }
}

const EpochRecord& TrainingHistory::best() const {
  if (best_epoch < 1 || static_cast<std::size_t>(best_epoch) > records.size()) {
    throw Error(ErrorCode::EmptySplit, "training history has no best epoch");
  }
  return records[static_cast<std::size_t>(best_epoch - 1)];
}

EarlyStopStep early_stopping_update(const EarlyStopState& state, double val_loss) {
  EarlyStopStep step{state, false, false};
  if (val_loss < state.best_val_loss - state.min_delta) {
    step.state.best_val_loss = val_loss;
    step.state.epochs_since_improvement = 0;
    step.improved = true;
  } else {
    ++step.state.epochs_since_improvement;
  }
  step.stop = step.state.epochs_since_improvement >= step.state.patience;
  return step;
}

SplitMetrics measure_split(const ClassifierModel& model, std::span<const LabeledItem> items, int batch_size) {
  const auto logits = infer_logits(model, items, batch_size).to(torch::kDouble);
  std::vector<std::int64_t> labels;
  labels.reserve(items.size());
  for (const auto& item : items) labels.push_back(item.class_index);
  const auto target = torch::tensor(labels, torch::kLong);
  SplitMetrics m;
  m.loss = torch::nn::functional::cross_entropy(logits, target).item<double>();
  std::size_t correct = 0;
  for (std::size_t n = 0; n < items.size(); ++n) {
    if (argmax_lowest(logits[static_cast<std::int64_t>(n)]) == labels[n]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
  return m;
}

namespace {

using StateSnapshot = std::vector<torch::Tensor>;

StateSnapshot snapshot(torch::nn::Module& module) {
  StateSnapshot out;
  for (const auto& p : module.parameters(true)) out.push_back(p.detach().clone());
  for (const auto& b : module.buffers(true)) out.push_back(b.detach().clone());
  return out;
}

void restore(torch::nn::Module& module, const StateSnapshot& state) {
  torch::NoGradGuard no_grad;
  std::size_t i = 0;
  for (auto& p : module.parameters(true)) p.copy_(state[i++]);
  for (auto& b : module.buffers(true)) b.copy_(state[i++]);
}

}  // namespace

TrainingHistory train(ClassifierModel& model, const SplitSet& splits, const TrainConfig& cfg,
                      const TrainOptions& options) {
  cfg.validate();
  options.augment.validate();
  if (splits.train.empty()) {
    throw Error(ErrorCode::EmptySplit, "training split is empty");
  }
  if (splits.val.empty() && !options.hooks.validate) {
    throw Error(ErrorCode::EmptySplit, "validation split is empty");
  }
  if (static_cast<std::size_t>(model.num_classes()) != splits.registry.count()) {
    throw Error(ErrorCode::RegistryMismatch, "model outputs do not match the split registry");
  }

  auto& module = model.module();
  torch::manual_seed(cfg.seed);

  std::vector<torch::Tensor> trainable;
  for (auto& p : module.backbone()->parameters(true)) {
    p.set_requires_grad(!cfg.freeze_backbone);
    if (!cfg.freeze_backbone) trainable.push_back(p);
  }
  for (auto& p : module.head()->parameters(true)) trainable.push_back(p);
  torch::optim::Adam optimizer(trainable, torch::optim::AdamOptions(cfg.learning_rate));

  const auto& items = splits.train;
  std::vector<std::optional<ImageTensor>> cache(options.cache_images ? items.size() : 0);
  auto load_clean = [&](std::size_t i) -> ImageTensor {
    if (!options.cache_images) {
      return load_and_preprocess(items[i].path, model.preprocess());
    }
    if (!cache[i]) cache[i] = load_and_preprocess(items[i].path, model.preprocess());
    return *cache[i];
  };

  TrainingHistory history;
  EarlyStopState stopper{std::numeric_limits<double>::infinity(), 0, cfg.patience, cfg.min_delta};
  StateSnapshot best_state;

  std::vector<std::size_t> order(items.size());
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = keyed_rng({cfg.seed, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch_ids(order.data() + start, end - start);

      std::vector<torch::Tensor> images;
      std::vector<std::int64_t> labels;
      for (std::size_t k = 0; k < batch_ids.size(); ++k) {
        const std::size_t id = batch_ids[k];
        auto aug_rng = keyed_rng({options.augment.seed, static_cast<std::uint64_t>(epoch), start + k});
        images.push_back(augment(load_clean(id), options.augment, aug_rng).tensor());
        labels.push_back(items[id].class_index);
      }
      auto x = torch::stack(images);
      const auto y = torch::tensor(labels, torch::kLong);
      if (options.hooks.transform_batch) {
        options.hooks.transform_batch(model, x, y);
      }

      module.train();
      optimizer.zero_grad();
      const auto logits = module.forward(x);
      const auto loss = torch::nn::functional::cross_entropy(logits, y);
      const double loss_value = loss.item<double>();
      if (!std::isfinite(loss_value)) {
        throw Error(ErrorCode::NonFiniteLoss,
                    "loss is " + std::to_string(loss_value) + " at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch_index));
      }
      loss.backward();
      optimizer.step();

      loss_sum += loss_value * static_cast<double>(batch_ids.size());
      const auto predicted = logits.detach().argmax(1);
      correct += static_cast<std::size_t>(predicted.eq(y).sum().item<std::int64_t>());
      if (options.hooks.on_batch) options.hooks.on_batch(epoch, batch_ids);
    }

    const SplitMetrics val = options.hooks.validate ? options.hooks.validate(model, epoch)
                                                    : measure_split(model, splits.val, cfg.batch_size);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(items.size()),
                    static_cast<double>(correct) / static_cast<double>(items.size()), val.loss, val.accuracy};
    history.records.push_back(rec);
    log::info("epoch ", std::setw(3), epoch, std::fixed, std::setprecision(4), ": train_loss ", rec.train_loss,
              " train_acc ", rec.train_accuracy, " val_loss ", rec.val_loss, " val_acc ", rec.val_accuracy);
    if (options.hooks.on_epoch) options.hooks.on_epoch(rec);

    if (!std::isfinite(val.loss)) {
      throw Error(ErrorCode::NonFiniteLoss, "validation loss is not finite at epoch " + std::to_string(epoch));
    }
    const auto step = early_stopping_update(stopper, val.loss);
    stopper = step.state;
    if (step.improved) {
      history.best_epoch = epoch;
      best_state = snapshot(module);
    }
    if (step.stop) {
      history.stopped_early = epoch < cfg.max_epochs;
      log::info("early stopping at epoch ", epoch, " (best epoch ", history.best_epoch, ")");
      break;
    }
  }

  if (!best_state.empty()) {
    restore(module, best_state);
  }
  module.eval();
  return history;
}

void export_history(const TrainingHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoFailure, "cannot write history " + path.string());
  }
  json header = {{"format", "tealeaf-history"},
                 {"columns", {"epoch", "train_loss", "train_acc", "val_loss", "val_acc"}},
                 {"best_epoch", history.best_epoch},
                 {"stopped_early", history.stopped_early}};
  out << header.dump() << '\n';
  for (const auto& r : history.records) {
    json rec = {{"epoch", r.epoch},
                {"train_loss", r.train_loss},
                {"train_acc", r.train_accuracy},
                {"val_loss", r.val_loss},
                {"val_acc", r.val_accuracy}};
    out << rec.dump() << '\n';
  }
  if (!out) {
    throw Error(ErrorCode::IoFailure, "failed writing history " + path.string());
  }
}

TrainingHistory load_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoFailure, "cannot open history " + path.string());
  }
  TrainingHistory history;
  std::string line;
  try {
    if (!std::getline(in, line)) {
      throw Error(ErrorCode::IoFailure, "history file " + path.string() + " has no header");
    }
    const json header = json::parse(line);
    if (header.at("format") != "tealeaf-history") {
      throw Error(ErrorCode::IoFailure, path.string() + " is not a history file");
    }
    history.best_epoch = header.at("best_epoch").get<int>();
    history.stopped_early = header.at("stopped_early").get<bool>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      history.records.push_back({rec.at("epoch").get<int>(), rec.at("train_loss").get<double>(),
                                 rec.at("train_acc").get<double>(), rec.at("val_loss").get<double>(),
                                 rec.at("val_acc").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoFailure, "malformed history " + path.string() + ": " + e.what());
  }
  return history;
}

}  // namespace tealeaf
