#include "tealeaf/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tealeaf/error.hpp"

namespace tealeaf {

ExplainMethod parse_explain_method(std::string_view text) {
  if (text == "gradcam" || text == "grad_cam") return ExplainMethod::grad_cam;
  if (text == "occlusion") return ExplainMethod::occlusion;
  if (text == "both") return ExplainMethod::both;
  throw Error(ErrorCode::ConfigInvalid, "explain method must be gradcam, occlusion or both, got '" + std::string(text) + "'");
}

namespace {

struct BadValue {};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const auto s = trim(text);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) throw BadValue{};
  return value;
}

bool parse_bool(const std::string& text) {
  const auto s = trim(text);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw BadValue{};
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_number<double>(part));
  if (out.empty()) throw BadValue{};
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"run.dataset_root", [](RunConfig& c, const std::string& v) { c.dataset_root = trim(v); }},
      {"run.output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = trim(v); }},
      {"run.architecture", [](RunConfig& c, const std::string& v) { c.architecture = parse_architecture(trim(v)); }},
      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); }},

      {"split.train", [](RunConfig& c, const std::string& v) { c.split.train = parse_number<double>(v); }},
      {"split.val", [](RunConfig& c, const std::string& v) { c.split.val = parse_number<double>(v); }},
      {"split.test", [](RunConfig& c, const std::string& v) { c.split.test = parse_number<double>(v); }},
      {"split.oversample", [](RunConfig& c, const std::string& v) { c.oversample = parse_bool(v); }},

      {"model.pretrained", [](RunConfig& c, const std::string& v) { c.pretrained = parse_bool(v); }},
      {"model.weights_dir",
       [](RunConfig& c, const std::string& v) {
         const auto s = trim(v);
         c.weights_dir = s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s);
       }},

      {"preprocess.height", [](RunConfig& c, const std::string& v) { c.preprocess.height = parse_number<int>(v); }},
      {"preprocess.width", [](RunConfig& c, const std::string& v) { c.preprocess.width = parse_number<int>(v); }},
      {"preprocess.imagenet_normalization",
       [](RunConfig& c, const std::string& v) { c.preprocess.imagenet_normalization = parse_bool(v); }},

      {"augment.horizontal_flip", [](RunConfig& c, const std::string& v) { c.augment.horizontal_flip = parse_bool(v); }},
      {"augment.rotation_degrees",
       [](RunConfig& c, const std::string& v) { c.augment.rotation_degrees = parse_number<double>(v); }},
      {"augment.zoom_fraction", [](RunConfig& c, const std::string& v) { c.augment.zoom_fraction = parse_number<double>(v); }},

      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_number<int>(v); }},
      {"train.learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_number<double>(v); }},
      {"train.max_epochs", [](RunConfig& c, const std::string& v) { c.train.max_epochs = parse_number<int>(v); }},
      {"train.patience", [](RunConfig& c, const std::string& v) { c.train.patience = parse_number<int>(v); }},
      {"train.min_delta", [](RunConfig& c, const std::string& v) { c.train.min_delta = parse_number<double>(v); }},
      {"train.freeze_backbone", [](RunConfig& c, const std::string& v) { c.train.freeze_backbone = parse_bool(v); }},
      {"train.cache_images", [](RunConfig& c, const std::string& v) { c.cache_images = parse_bool(v); }},

      {"adversarial.epsilon", [](RunConfig& c, const std::string& v) { c.adversarial.epsilon = parse_number<double>(v); }},
      {"adversarial.adversarial_fraction",
       [](RunConfig& c, const std::string& v) { c.adversarial.adversarial_fraction = parse_number<double>(v); }},
      {"adversarial.sweep_epsilons",
       [](RunConfig& c, const std::string& v) { c.adversarial.sweep_epsilons = parse_list(v); }},

      {"evaluate.batch_size", [](RunConfig& c, const std::string& v) { c.eval_batch_size = parse_number<int>(v); }},
      {"evaluate.split",
       [](RunConfig& c, const std::string& v) {
         try {
           c.eval_split = parse_split_role(trim(v));
         } catch (const Error&) {
           throw BadValue{};
         }
       }},

      {"explain.method",
       [](RunConfig& c, const std::string& v) {
         try {
           c.explain_method = parse_explain_method(trim(v));
         } catch (const Error&) {
           throw BadValue{};
         }
       }},
      {"explain.patch_size", [](RunConfig& c, const std::string& v) { c.occlusion.patch_size = parse_number<int>(v); }},
      {"explain.stride", [](RunConfig& c, const std::string& v) { c.occlusion.stride = parse_number<int>(v); }},
      {"explain.baseline_value",
       [](RunConfig& c, const std::string& v) { c.occlusion.baseline_value = parse_number<float>(v); }},
      {"explain.overlap",
       [](RunConfig& c, const std::string& v) {
         const auto s = trim(v);
         if (s == "average") {
           c.occlusion.overlap = OverlapMode::average;
         } else if (s == "max") {
           c.occlusion.overlap = OverlapMode::max;
         } else {
           throw BadValue{};
         }
       }},
      {"explain.overlay_alpha", [](RunConfig& c, const std::string& v) { c.overlay_alpha = parse_number<double>(v); }},

      {"serve.checkpoint", [](RunConfig& c, const std::string& v) { c.serve.checkpoint = trim(v); }},
      {"serve.host", [](RunConfig& c, const std::string& v) { c.serve.host = trim(v); }},
      {"serve.port", [](RunConfig& c, const std::string& v) { c.serve.port = parse_number<int>(v); }},
      {"serve.max_payload_bytes",
       [](RunConfig& c, const std::string& v) { c.serve.max_payload_bytes = parse_number<std::size_t>(v); }},
      {"serve.overlay_alpha", [](RunConfig& c, const std::string& v) { c.serve.overlay_alpha = parse_number<double>(v); }},
      {"serve.worker_threads", [](RunConfig& c, const std::string& v) { c.serve.worker_threads = parse_number<int>(v); }},
  };
  return table;
}

const Setter& setter_for(const std::string& key) {
  for (const auto& [name, fn] : setters()) {
    if (name == key) return fn;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown key '" + key + "'");
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& fn = setter_for(key);
  try {
    fn(cfg, value);
  } catch (const BadValue&) {
    throw Error(ErrorCode::ConfigInvalid, "bad value '" + value + "' for " + key);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, key + ": " + e.message());
  }
}

// Re-raises a nested validation failure as ConfigInvalid under `section`.
template <typename Fn>
void check(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, section + "." + e.message());
  }
}

}  // namespace

void RunConfig::validate() const {
  const double sum = split.train + split.val + split.test;
  if (split.train < 0 || split.val < 0 || split.test < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::ConfigInvalid, "split.train/val/test must be non-negative and sum to 1");
  }
  check("preprocess", [&] { preprocess.validate(); });
  check("augment", [&] { augment.validate(); });
  check("train", [&] { train.validate(); });
  check("adversarial", [&] { adversarial.validate(); });
  if (eval_batch_size < 1) {
    throw Error(ErrorCode::ConfigInvalid, "evaluate.batch_size must be at least 1");
  }
  check("explain", [&] {
    if (occlusion.patch_size < 1 || occlusion.stride < 1 || occlusion.stride > occlusion.patch_size) {
      throw Error(ErrorCode::ConfigInvalid, "patch_size/stride need 1 <= stride <= patch_size");
    }
    if (!(occlusion.baseline_value >= 0.0F && occlusion.baseline_value <= 1.0F)) {
      throw Error(ErrorCode::ConfigInvalid, "baseline_value must lie in [0, 1]");
    }
    if (!(overlay_alpha >= 0.0 && overlay_alpha <= 1.0)) {
      throw Error(ErrorCode::ConfigInvalid, "overlay_alpha must lie in [0, 1]");
    }
  });
  check("serve", [&] { serve.validate(); });
}

RunConfig build_run_config(const std::vector<std::pair<std::string, std::string>>& entries) {
  RunConfig cfg;
  for (const auto& [key, value] : entries) {
    if (key == "run.architecture") apply(cfg, key, value);
  }
  cfg.train = TrainConfig::preset(cfg.architecture);
  for (const auto& [key, value] : entries) {
    if (key != "run.architecture") apply(cfg, key, value);
  }
  cfg.train.seed = cfg.seed;
  cfg.augment.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::vector<std::pair<std::string, std::string>> read_config_entries(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error(ErrorCode::ConfigInvalid, "key '" + section + "' is outside any section");
    }
    for (const auto& [key, leaf] : body) {
      entries.emplace_back(section + "." + key, leaf.get_value<std::string>());
    }
  }
  return entries;
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::ConfigInvalid, "override '" + text + "' is not section.key=value");
  }
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, fn] : setters()) keys.push_back(name);
  return keys;
}

}  // namespace tealeaf
