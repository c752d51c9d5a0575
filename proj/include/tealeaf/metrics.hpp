#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <torch/types.h>

#include "tealeaf/dataset.hpp"
#include "tealeaf/model.hpp"

namespace tealeaf {

/// K x K counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(ClassRegistry registry);
  ConfusionMatrix(ClassRegistry registry, std::vector<std::int64_t> row_major_counts);

  std::size_t size() const noexcept { return registry_.count(); }
  const ClassRegistry& registry() const noexcept { return registry_; }
  std::int64_t at(std::size_t true_class, std::size_t predicted) const { return counts_[true_class * size() + predicted]; }
  void add(std::size_t true_class, std::size_t predicted) { ++counts_[true_class * size() + predicted]; }

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(std::size_t i) const;
  std::int64_t column_sum(std::size_t j) const;
  const std::vector<std::int64_t>& counts() const noexcept { return counts_; }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  ClassRegistry registry_;
  std::vector<std::int64_t> counts_;
};

struct PerClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassMetrics {
  std::vector<PerClassMetrics> per_class;
  double accuracy = 0.0;
};

/// Throws LengthMismatch or LabelOutOfRange.
ConfusionMatrix confusion_matrix(std::span<const std::int64_t> true_labels, std::span<const std::int64_t> predicted_labels,
                                 const ClassRegistry& registry);

/// Zero denominators give 0 for that metric. Throws EmptyMatrix when the
/// matrix holds no items.
ClassMetrics class_metrics(const ConfusionMatrix& cm);

struct ItemPrediction {
  std::filesystem::path path;
  std::int64_t true_class = 0;
  std::int64_t predicted_class = 0;
  std::vector<double> probabilities;
};

struct EvaluationReport {
  ConfusionMatrix matrix;
  ClassMetrics metrics;
  std::vector<ItemPrediction> predictions;
};

/// Logits for every item, clean preprocessing per the model's config, in
/// item order. Throws EmptySplit when `items` is empty.
torch::Tensor infer_logits(const ClassifierModel& model, std::span<const LabeledItem> items, int batch_size = 32);

/// Clean inference + argmax (lowest index wins ties) + metrics.
EvaluationReport evaluate(const ClassifierModel& model, std::span<const LabeledItem> items,
                          const ClassRegistry& registry, int batch_size = 32);

/// Builds the report pieces from precomputed logits (shared by evaluate()
/// and callers that already ran inference).
EvaluationReport report_from_logits(const torch::Tensor& logits, std::span<const LabeledItem> items,
                                    const ClassRegistry& registry);

// Machine-readable report: {"classes": [{class, precision, recall, f1}],
// "accuracy", "matrix", "registry"} at full precision.
void write_report_json(const EvaluationReport& report, const std::filesystem::path& path);
/// Reads back the matrix; metrics are recomputed from it.
ConfusionMatrix read_report_matrix(const std::filesystem::path& path);

/// Plain-text table, one row per class (Class, Precision, Recall, F1-Score)
/// at two decimals, followed by overall accuracy.
std::string render_report_table(const ConfusionMatrix& cm, const ClassMetrics& metrics,
                                const std::string& model_name = {});

}  // namespace tealeaf
