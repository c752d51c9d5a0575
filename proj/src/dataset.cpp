#include "tealeaf/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>


#include "json.hpp"
#include "tealeaf/error.hpp"
#include "tealeaf/log.hpp"
#include "tealeaf/image.hpp"
#include "tealeaf/random.hpp"

namespace tealeaf {

namespace fs = std::filesystem;
using nlohmann::json;

ClassRegistry::ClassRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string_view> seen;
  for (const auto& n : names_) {
    if (n.empty()) {
      throw Error(ErrorCode::InvalidArgument, "class names must be non-empty");
    }
    if (!seen.insert(n).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate class name '" + n + "'");
    }
  }
}

const std::string& ClassRegistry::name(std::size_t index) const {
  if (index >= names_.size()) {
    throw Error(ErrorCode::LabelOutOfRange, "class index " + std::to_string(index) + " out of range");
  }
  return names_[index];
}

std::optional<std::size_t> ClassRegistry::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - names_.begin());
}

std::string_view to_string(SplitRole role) noexcept {
  switch (role) {
    case SplitRole::train: return "train";
    case SplitRole::val: return "val";
    case SplitRole::test: return "test";
  }
  return "train";
}

SplitRole parse_split_role(std::string_view text) {
  if (text == "train") return SplitRole::train;
  if (text == "val") return SplitRole::val;
  if (text == "test") return SplitRole::test;
  throw Error(ErrorCode::InvalidArgument, "unknown split '" + std::string(text) + "'");
}

const std::vector<LabeledItem>& SplitSet::items(SplitRole role) const {
  switch (role) {
    case SplitRole::train: return train;
    case SplitRole::val: return val;
    case SplitRole::test: return test;
  }
  return train;
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

// floor(n * ratio) with slack for ratios like 0.7 that are not exact in binary.
std::size_t floor_share(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

}  // namespace

DatasetIndex scan_dataset(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::MissingRoot, "dataset root '" + root.string() + "' is not a directory");
  }

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) {
      class_dirs.push_back(entry.path());
    }
  }
  std::sort(class_dirs.begin(), class_dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  std::vector<std::string> names;
  DatasetIndex index;
  for (const auto& dir : class_dirs) {
    const int class_index = static_cast<int>(names.size());
    names.push_back(dir.filename().string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && has_image_extension(entry.path())) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());

    std::size_t kept = 0;
    for (const auto& file : files) {
      try {
        (void)read_rgb8(file);
      } catch (const Error& e) {
        log::warn("skipping undecodable image ", file.string(), ": ", e.what());
        index.skipped.push_back(file);
        continue;
      }
      index.items.push_back({file, class_index, false});
      ++kept;
    }
    if (kept == 0) {
      throw Error(ErrorCode::EmptyClassDirectory, "class directory '" + dir.string() + "' has no images");
    }
  }
  if (names.empty()) {
    throw Error(ErrorCode::EmptyClassDirectory, "dataset root '" + root.string() + "' has no class directories");
  }
  index.registry = ClassRegistry(std::move(names));
  return index;
}

std::vector<std::size_t> class_counts(std::span<const LabeledItem> items, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& item : items) {
    if (item.class_index < 0 || static_cast<std::size_t>(item.class_index) >= num_classes) {
      throw Error(ErrorCode::LabelOutOfRange, "class index " + std::to_string(item.class_index) + " out of range");
    }
    ++counts[static_cast<std::size_t>(item.class_index)];
  }
  return counts;
}

SplitSet stratified_split(const DatasetIndex& index, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::RatioSumInvalid, "split ratios must be non-negative and sum to 1");
  }

  const std::size_t k = index.registry.count();
  std::vector<std::vector<LabeledItem>> by_class(k);
  for (const auto& item : index.items) {
    if (item.class_index < 0 || static_cast<std::size_t>(item.class_index) >= k) {
      throw Error(ErrorCode::LabelOutOfRange, "item " + item.path.string() + " has an invalid class index");
    }
    by_class[static_cast<std::size_t>(item.class_index)].push_back(item);
  }

  SplitSet out;
  out.registry = index.registry;
  out.ratios = ratios;
  out.seed = seed;
  for (std::size_t c = 0; c < k; ++c) {
    auto& items = by_class[c];
    if (items.size() < 3) {
      throw Error(ErrorCode::SplitInfeasible, "class '" + index.registry.name(c) + "' has fewer than 3 items");
    }
    std::sort(items.begin(), items.end(),
              [](const LabeledItem& a, const LabeledItem& b) { return a.path < b.path; });
    auto rng = keyed_rng({seed, c});
    std::shuffle(items.begin(), items.end(), rng);

    const std::size_t n = items.size();
    const std::size_t n_train = floor_share(n, ratios.train);
    const std::size_t n_val = std::min(floor_share(n, ratios.val), n - n_train);
    auto first = items.begin();
    out.train.insert(out.train.end(), first, first + static_cast<std::ptrdiff_t>(n_train));
    out.val.insert(out.val.end(), first + static_cast<std::ptrdiff_t>(n_train),
                   first + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.insert(out.test.end(), first + static_cast<std::ptrdiff_t>(n_train + n_val), items.end());
  }
  return out;
}

SplitSet oversample_training(const SplitSet& split, std::uint64_t seed) {
  const std::size_t k = split.registry.count();
  std::vector<std::vector<const LabeledItem*>> by_class(k);
  for (const auto& item : split.train) {
    if (item.class_index < 0 || static_cast<std::size_t>(item.class_index) >= k) {
      throw Error(ErrorCode::LabelOutOfRange, "train item " + item.path.string() + " has an invalid class index");
    }
    by_class[static_cast<std::size_t>(item.class_index)].push_back(&item);
  }

  std::size_t majority = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (by_class[c].empty()) {
      throw Error(ErrorCode::EmptyTrainClass, "class '" + split.registry.name(c) + "' has no training items");
    }
    majority = std::max(majority, by_class[c].size());
  }

  SplitSet out = split;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& pool = by_class[c];
    auto rng = keyed_rng({seed, c});
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t added = pool.size(); added < majority; ++added) {
      LabeledItem copy = *pool[pick(rng)];
      copy.duplicated = true;
      out.train.push_back(std::move(copy));
    }
  }
  return out;
}

void write_manifest(const SplitSet& split, const fs::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoFailure, "cannot write manifest " + path.string());
  }
  json header = {
      {"format", "tealeaf-manifest"},
      {"version", 1},
      {"seed", split.seed},
      {"ratios", {split.ratios.train, split.ratios.val, split.ratios.test}},
      {"registry", split.registry.names()},
  };
  out << header.dump() << '\n';
  for (SplitRole role : {SplitRole::train, SplitRole::val, SplitRole::test}) {
    for (const auto& item : split.items(role)) {
      json rec = {
          {"path", item.path.generic_string()},
          {"class_index", item.class_index},
          {"split", to_string(role)},
          {"duplicated", item.duplicated},
      };
      out << rec.dump() << '\n';
    }
  }
  if (!out) {
    throw Error(ErrorCode::IoFailure, "failed writing manifest " + path.string());
  }
}

SplitSet read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoFailure, "cannot open manifest " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::IoFailure, "manifest " + path.string() + " is empty");
  }
  SplitSet split;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "tealeaf-manifest") {
      throw Error(ErrorCode::IoFailure, "not a manifest file: " + path.string());
    }
    split.seed = header.at("seed").get<std::uint64_t>();
    const auto ratios = header.at("ratios").get<std::vector<double>>();
    if (ratios.size() != 3) {
      throw Error(ErrorCode::IoFailure, "manifest ratios must have three entries");
    }
    split.ratios = {ratios[0], ratios[1], ratios[2]};
    split.registry = ClassRegistry(header.at("registry").get<std::vector<std::string>>());

    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      LabeledItem item{rec.at("path").get<std::string>(), rec.at("class_index").get<int>(),
                       rec.at("duplicated").get<bool>()};
      if (item.class_index < 0 || static_cast<std::size_t>(item.class_index) >= split.registry.count()) {
        throw Error(ErrorCode::LabelOutOfRange, "manifest item " + item.path.string() + " has an invalid class index");
      }
      switch (parse_split_role(rec.at("split").get<std::string>())) {
        case SplitRole::train: split.train.push_back(std::move(item)); break;
        case SplitRole::val: split.val.push_back(std::move(item)); break;
        case SplitRole::test: split.test.push_back(std::move(item)); break;
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoFailure, "malformed manifest " + path.string() + ": " + e.what());
  }
  return split;
}

}  // namespace tealeaf
