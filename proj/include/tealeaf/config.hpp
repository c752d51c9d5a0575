#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tealeaf/adversarial.hpp"
#include "tealeaf/dataset.hpp"
#include "tealeaf/explain.hpp"
#include "tealeaf/image.hpp"
#include "tealeaf/model.hpp"
#include "tealeaf/service.hpp"
#include "tealeaf/trainer.hpp"

namespace tealeaf {

enum class ExplainMethod { grad_cam, occlusion, both };

ExplainMethod parse_explain_method(std::string_view text);

/// Everything one pipeline run needs. Loaded from an INI file with the
/// sections [run] [split] [model] [preprocess] [augment] [train]
/// [adversarial] [evaluate] [explain] [serve].
struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path output_dir = "runs/default";
  ArchitectureId architecture = ArchitectureId::densenet201;
  std::uint64_t seed = 0;

  SplitRatios split;
  bool oversample = true;

  bool pretrained = true;
  std::optional<std::filesystem::path> weights_dir;

  PreprocessConfig preprocess;
  AugmentConfig augment;
  TrainConfig train;
  AdversarialConfig adversarial;
  bool cache_images = false;

  int eval_batch_size = 32;
  SplitRole eval_split = SplitRole::test;

  ExplainMethod explain_method = ExplainMethod::both;
  OcclusionConfig occlusion;
  double overlay_alpha = 0.4;

  ServiceConfig serve;

  /// Checks every nested config; throws ConfigInvalid.
  void validate() const;
};

/// `section.key=value` pairs applied in order. The architecture is applied
/// first so that its training preset underlies the other keys, and
/// [run] seed is copied into every nested seed.
/// Unknown keys and unparsable values throw ConfigInvalid naming the key.
RunConfig build_run_config(const std::vector<std::pair<std::string, std::string>>& entries);

/// Reads the INI file into `section.key` entries.
std::vector<std::pair<std::string, std::string>> read_config_entries(const std::filesystem::path& path);

/// "section.key=value" to a pair; throws ConfigInvalid.
std::pair<std::string, std::string> parse_override(const std::string& text);

/// Every accepted `section.key`, in a stable order.
std::vector<std::string> known_config_keys();

}  // namespace tealeaf
