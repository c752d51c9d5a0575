#include "tealeaf/model.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>

#include <torch/csrc/jit/serialization/pickle.h>
#include <torch/torch.h>

#include "json.hpp"
#include "tealeaf/error.hpp"
#include "tealeaf/log.hpp"

namespace tealeaf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ArchitectureId arch) noexcept {
  switch (arch) {
    case ArchitectureId::densenet201: return "densenet201";
    case ArchitectureId::mobilenet_v2: return "mobilenet_v2";
    case ArchitectureId::inception_v3: return "inception_v3";
  }
  return "unknown";
}

ArchitectureId parse_architecture(std::string_view name) {
  for (auto arch : {ArchitectureId::densenet201, ArchitectureId::mobilenet_v2, ArchitectureId::inception_v3}) {
    if (name == to_string(arch)) {
      return arch;
    }
  }
  throw Error(ErrorCode::UnknownArchitecture,
              "'" + std::string(name) + "' (expected densenet201, mobilenet_v2 or inception_v3)");
}

std::string code_version() { return std::string("tealeaf ") + TEALEAF_VERSION; }

// ------------------------------------------------------------------ module

ClassifierModule::ClassifierModule(std::shared_ptr<Backbone> backbone, std::int64_t num_classes)
    : backbone_(register_module("backbone", std::move(backbone))), num_classes_(num_classes) {
  if (num_classes < 2) {
    throw Error(ErrorCode::InvalidArgument, "num_classes must be at least 2");
  }
  head_ = register_module("head", torch::nn::Linear(backbone_->out_channels(), num_classes));
  torch::NoGradGuard no_grad;
  torch::nn::init::normal_(head_->weight, 0.0, 0.01);
  torch::nn::init::zeros_(head_->bias);
}

torch::Tensor ClassifierModule::features(torch::Tensor images) {
  if (standardize_) {
    const auto mean = torch::tensor({0.485F, 0.456F, 0.406F}).view({1, 3, 1, 1});
    const auto std = torch::tensor({0.229F, 0.224F, 0.225F}).view({1, 3, 1, 1});
    images = (images - mean) / std;
  }
  return backbone_->forward(std::move(images));
}

torch::Tensor ClassifierModule::logits_from_features(const torch::Tensor& features) {
  return head_->forward(features.mean({2, 3}));
}

torch::Tensor ClassifierModule::forward(torch::Tensor images) {
  return logits_from_features(features(std::move(images)));
}

// ------------------------------------------------------------------- model

ClassifierModel::ClassifierModel(std::shared_ptr<ClassifierModule> module, std::optional<ArchitectureId> arch,
                                 PreprocessConfig preprocess)
    : module_(std::move(module)), arch_(arch), preprocess_(preprocess) {
  module_->set_input_standardization(preprocess_.imagenet_normalization);
}

torch::Tensor ClassifierModel::predict_logits(const torch::Tensor& batch) const {
  torch::NoGradGuard no_grad;
  // Only flip the flag when needed: concurrent readers must not write it.
  if (module_->is_training()) module_->eval();
  return module_->forward(batch);
}

torch::Tensor ClassifierModel::predict_proba(const torch::Tensor& batch) const {
  return torch::softmax(predict_logits(batch), 1);
}

namespace {

void copy_state(torch::nn::Module& from, torch::nn::Module& to) {
  torch::NoGradGuard no_grad;
  auto src_params = from.named_parameters(true);
  for (auto& dst : to.named_parameters(true)) {
    dst.value().copy_(src_params[dst.key()]);
  }
  auto src_buffers = from.named_buffers(true);
  for (auto& dst : to.named_buffers(true)) {
    dst.value().copy_(src_buffers[dst.key()]);
  }
}

}  // namespace

ClassifierModel ClassifierModel::clone() const {
  if (!arch_) {
    // Custom backbones have no factory to rebuild an empty instance from.
    throw Error(ErrorCode::InvalidArgument, "clone() needs a model built from a known architecture");
  }
  auto fresh = std::make_shared<ClassifierModule>(build_backbone(*arch_), num_classes());
  copy_state(*module_, *fresh);
  return ClassifierModel(fresh, arch_, preprocess_);
}

std::int64_t argmax_lowest(const torch::Tensor& row) {
  auto values = row.to(torch::kDouble).contiguous();
  const auto* p = values.data_ptr<double>();
  std::int64_t best = 0;
  for (std::int64_t i = 1; i < values.numel(); ++i) {
    if (p[i] > p[best]) {
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------- building

std::size_t load_backbone_weights(Backbone& backbone, const fs::path& state_dict_file) {
  std::ifstream in(state_dict_file, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::WeightsUnavailable, "cannot open weights file " + state_dict_file.string());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::unordered_map<std::string, torch::Tensor> by_name;
  try {
    const auto dict = torch::pickle_load(bytes).toGenericDict();
    for (const auto& entry : dict) {
      if (entry.value().isTensor()) by_name.emplace(entry.key().toStringRef(), entry.value().toTensor());
    }
  } catch (const c10::Error&) {
    throw Error(ErrorCode::WeightsUnavailable, "unreadable weights file " + state_dict_file.string());
  }

  torch::NoGradGuard no_grad;
  std::size_t copied = 0;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw Error(ErrorCode::WeightsUnavailable, "weights file lacks tensor '" + name + "'");
    }
    if (it->second.sizes() != dst.sizes()) {
      throw Error(ErrorCode::WeightsUnavailable, "shape mismatch for tensor '" + name + "'");
    }
    dst.copy_(it->second);
    ++copied;
  };
  for (auto& p : backbone.named_parameters(true)) {
    assign(p.key(), p.value());
  }
  for (auto& b : backbone.named_buffers(true)) {
    assign(b.key(), b.value());
  }
  return copied;
}

namespace {

void init_backbone(Backbone& backbone) {
  torch::NoGradGuard no_grad;
  for (auto& m : backbone.modules(false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
    } else if (auto* bn = m->as<torch::nn::BatchNorm2d>()) {
      torch::nn::init::ones_(bn->weight);
      torch::nn::init::zeros_(bn->bias);
    }
  }
}

fs::path resolve_weights_dir(const BuildOptions& options) {
  if (options.weights_dir) {
    return *options.weights_dir;
  }
  if (const char* env = std::getenv("TEALEAF_WEIGHTS_DIR")) {
    return env;
  }
  return {};
}

}  // namespace

ClassifierModel build_model(ArchitectureId arch, std::int64_t num_classes, const BuildOptions& options) {
  if (num_classes < 2) {
    throw Error(ErrorCode::InvalidArgument, "num_classes must be at least 2");
  }
  options.preprocess.validate();
  auto backbone = build_backbone(arch);
  init_backbone(*backbone);
  if (options.pretrained) {
    const fs::path dir = resolve_weights_dir(options);
    const fs::path file = dir / (std::string(to_string(arch)) + ".pt");
    if (dir.empty() || !fs::exists(file)) {
      throw Error(ErrorCode::WeightsUnavailable,
                  "no pretrained weights for " + std::string(to_string(arch)) +
                      " (set TEALEAF_WEIGHTS_DIR to a directory produced by tools/export_pretrained_weights.py)");
    }
    const auto n = load_backbone_weights(*backbone, file);
    log::info("loaded ", n, " pretrained tensors for ", to_string(arch), " from ", file.string());
  }
  auto module = std::make_shared<ClassifierModule>(std::move(backbone), num_classes);
  return ClassifierModel(std::move(module), arch, options.preprocess);
}

// ------------------------------------------------------------- checkpoints

void save_checkpoint(const ClassifierModel& model, const ClassRegistry& registry, const fs::path& path) {
  if (!model.architecture()) {
    throw Error(ErrorCode::InvalidArgument, "only models built from a known architecture can be checkpointed");
  }
  if (static_cast<std::size_t>(model.num_classes()) != registry.count()) {
    throw Error(ErrorCode::RegistryMismatch, "model has " + std::to_string(model.num_classes()) +
                                                 " outputs but the registry names " +
                                                 std::to_string(registry.count()) + " classes");
  }
  const auto& pre = model.preprocess();
  json meta = {
      {"format", "tealeaf-checkpoint"},
      {"version", 1},
      {"architecture", to_string(*model.architecture())},
      {"num_classes", model.num_classes()},
      {"classes", registry.names()},
      {"preprocess", {{"height", pre.height}, {"width", pre.width}, {"imagenet_normalization", pre.imagenet_normalization}}},
      {"code_version", code_version()},
  };

  torch::serialize::OutputArchive archive;
  archive.write("meta", c10::IValue(meta.dump()));
  for (const auto& p : model.module().named_parameters(true)) {
    archive.write("param." + p.key(), p.value().detach());
  }
  for (const auto& b : model.module().named_buffers(true)) {
    archive.write("buffer." + b.key(), b.value(), /*is_buffer=*/true);
  }
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw Error(ErrorCode::IoFailure, "cannot write checkpoint " + path.string());
  }
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint " + path.string() + " does not exist");
  }
  torch::serialize::InputArchive archive;
  json meta;
  try {
    archive.load_from(path.string());
    c10::IValue raw;
    archive.read("meta", raw);
    meta = json::parse(raw.toStringRef());
  } catch (const c10::Error&) {
    throw Error(ErrorCode::CorruptCheckpoint, "unreadable checkpoint " + path.string());
  } catch (const json::exception&) {
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint metadata is malformed in " + path.string());
  }

  try {
    if (meta.at("format") != "tealeaf-checkpoint") {
      throw Error(ErrorCode::CorruptCheckpoint, path.string() + " is not a tealeaf checkpoint");
    }
    ClassRegistry registry(meta.at("classes").get<std::vector<std::string>>());
    const auto num_classes = meta.at("num_classes").get<std::int64_t>();
    if (static_cast<std::size_t>(num_classes) != registry.count()) {
      throw Error(ErrorCode::RegistryMismatch, "checkpoint stores " + std::to_string(num_classes) +
                                                   " outputs but " + std::to_string(registry.count()) +
                                                   " class names");
    }
    PreprocessConfig pre;
    pre.height = meta.at("preprocess").at("height").get<int>();
    pre.width = meta.at("preprocess").at("width").get<int>();
    pre.imagenet_normalization = meta.at("preprocess").at("imagenet_normalization").get<bool>();

    const auto arch = parse_architecture(meta.at("architecture").get<std::string>());
    auto module = std::make_shared<ClassifierModule>(build_backbone(arch), num_classes);
    torch::NoGradGuard no_grad;
    for (auto& p : module->named_parameters(true)) {
      torch::Tensor t;
      archive.read("param." + p.key(), t);
      if (t.sizes() != p.value().sizes()) {
        throw Error(ErrorCode::CorruptCheckpoint, "shape mismatch for " + p.key());
      }
      p.value().copy_(t);
    }
    for (auto& b : module->named_buffers(true)) {
      torch::Tensor t;
      archive.read("buffer." + b.key(), t, /*is_buffer=*/true);
      if (t.sizes() != b.value().sizes()) {
        throw Error(ErrorCode::CorruptCheckpoint, "shape mismatch for " + b.key());
      }
      b.value().copy_(t);
    }
    module->eval();
    return {ClassifierModel(std::move(module), arch, pre), std::move(registry),
            meta.at("code_version").get<std::string>()};
  } catch (const c10::Error&) {
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint " + path.string() + " is missing tensors");
  } catch (const json::exception&) {
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint metadata is incomplete in " + path.string());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::UnknownArchitecture) {
      throw Error(ErrorCode::CorruptCheckpoint, e.what());
    }
    throw;
  }
}

LoadedCheckpoint load_checkpoint(const fs::path& path, const ClassRegistry& expected) {
  auto loaded = load_checkpoint(path);
  if (loaded.registry != expected) {
    throw Error(ErrorCode::RegistryMismatch, "checkpoint classes (" + std::to_string(loaded.registry.count()) +
                                                 ") do not match the expected registry (" +
                                                 std::to_string(expected.count()) + ")");
  }
  return loaded;
}

}  // namespace tealeaf
