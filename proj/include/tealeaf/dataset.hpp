#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tealeaf {

/// Ordered, immutable list of class names. Every integer class index in the
/// project refers to a position in this list.
class ClassRegistry {
 public:
  ClassRegistry() = default;
  explicit ClassRegistry(std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t count() const noexcept { return names_.size(); }
  const std::string& name(std::size_t index) const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  bool operator==(const ClassRegistry&) const = default;

 private:
  std::vector<std::string> names_;
};

struct LabeledItem {
  std::filesystem::path path;
  int class_index = 0;
  // True for entries appended by oversampling.
  bool duplicated = false;

  bool operator==(const LabeledItem&) const = default;
};

struct DatasetIndex {
  ClassRegistry registry;
  std::vector<LabeledItem> items;
  // Files that looked like images but failed to decode; excluded from items.
  std::vector<std::filesystem::path> skipped;
};

struct SplitRatios {
  double train = 0.70;
  double val = 0.20;
  double test = 0.10;

  bool operator==(const SplitRatios&) const = default;
};

enum class SplitRole { train, val, test };

std::string_view to_string(SplitRole role) noexcept;
SplitRole parse_split_role(std::string_view text);

struct SplitSet {
  ClassRegistry registry;
  std::vector<LabeledItem> train;
  std::vector<LabeledItem> val;
  std::vector<LabeledItem> test;
  SplitRatios ratios;
  std::uint64_t seed = 0;

  const std::vector<LabeledItem>& items(SplitRole role) const;
  bool operator==(const SplitSet&) const = default;
};

/// Indexes `<root>/<class>/<image>.{jpg,jpeg,png}`. Classes are ordered by
/// lexicographic directory name and items by path. Every candidate file is
/// decoded once; undecodable files are logged, recorded in `skipped` and
/// left out of the index.
DatasetIndex scan_dataset(const std::filesystem::path& root);

/// Per class: deterministic shuffle keyed by (seed, class index), then
/// floor(n * train) items to train, floor(n * val) to val, the rest to test.
SplitSet stratified_split(const DatasetIndex& index, const SplitRatios& ratios, std::uint64_t seed);

/// Appends uniformly drawn duplicates of minority-class train items until
/// every class matches the majority count. Validation and test are untouched.
SplitSet oversample_training(const SplitSet& split, std::uint64_t seed);

/// Number of items per class in `items`, sized to `num_classes`.
std::vector<std::size_t> class_counts(std::span<const LabeledItem> items, std::size_t num_classes);

// Manifest: JSON lines. The first line is a header
// {"format","version","seed","ratios","registry"}; each following line is one
// item {"path","class_index","split","duplicated"}.
void write_manifest(const SplitSet& split, const std::filesystem::path& path);
SplitSet read_manifest(const std::filesystem::path& path);

}  // namespace tealeaf
