#include "tealeaf/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <torch/torch.h>

#include "json.hpp"
#include "tealeaf/error.hpp"

namespace tealeaf {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(ClassRegistry registry)
    : registry_(std::move(registry)), counts_(registry_.count() * registry_.count(), 0) {}

ConfusionMatrix::ConfusionMatrix(ClassRegistry registry, std::vector<std::int64_t> row_major_counts)
    : registry_(std::move(registry)), counts_(std::move(row_major_counts)) {
  if (counts_.size() != registry_.count() * registry_.count()) {
    throw Error(ErrorCode::ShapeMismatch, "confusion matrix needs K*K counts");
  }
  for (auto c : counts_) {
    if (c < 0) {
      throw Error(ErrorCode::InvalidArgument, "confusion matrix counts must be non-negative");
    }
  }
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (std::size_t i = 0; i < size(); ++i) t += at(i, i);
  return t;
}

std::int64_t ConfusionMatrix::row_sum(std::size_t i) const {
  std::int64_t s = 0;
  for (std::size_t j = 0; j < size(); ++j) s += at(i, j);
  return s;
}

std::int64_t ConfusionMatrix::column_sum(std::size_t j) const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < size(); ++i) s += at(i, j);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const std::int64_t> true_labels, std::span<const std::int64_t> predicted_labels,
                                 const ClassRegistry& registry) {
  if (true_labels.size() != predicted_labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(true_labels.size()) + " true labels vs " +
                                               std::to_string(predicted_labels.size()) + " predictions");
  }
  const auto k = static_cast<std::int64_t>(registry.count());
  ConfusionMatrix cm(registry);
  for (std::size_t n = 0; n < true_labels.size(); ++n) {
    const auto t = true_labels[n];
    const auto p = predicted_labels[n];
    if (t < 0 || t >= k || p < 0 || p >= k) {
      throw Error(ErrorCode::LabelOutOfRange, "label pair (" + std::to_string(t) + ", " + std::to_string(p) +
                                                  ") at position " + std::to_string(n));
    }
    cm.add(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

ClassMetrics class_metrics(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (cm.size() == 0 || total == 0) {
    throw Error(ErrorCode::EmptyMatrix, "confusion matrix holds no items");
  }
  ClassMetrics m;
  m.per_class.resize(cm.size());
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto col = cm.column_sum(c);
    const auto row = cm.row_sum(c);
    auto& pc = m.per_class[c];
    pc.precision = col > 0 ? tp / static_cast<double>(col) : 0.0;
    pc.recall = row > 0 ? tp / static_cast<double>(row) : 0.0;
    const double denom = pc.precision + pc.recall;
    pc.f1 = denom > 0.0 ? 2.0 * pc.precision * pc.recall / denom : 0.0;
  }
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  return m;
}

torch::Tensor infer_logits(const ClassifierModel& model, std::span<const LabeledItem> items, int batch_size) {
  if (items.empty()) {
    throw Error(ErrorCode::EmptySplit, "no items to evaluate");
  }
  if (batch_size < 1) {
    throw Error(ErrorCode::InvalidArgument, "batch_size must be at least 1");
  }
  std::vector<torch::Tensor> chunks;
  for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(items.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<torch::Tensor> images;
    images.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(load_and_preprocess(items[i].path, model.preprocess()).tensor());
    }
    chunks.push_back(model.predict_logits(torch::stack(images)));
  }
  return torch::cat(chunks, 0);
}

EvaluationReport report_from_logits(const torch::Tensor& logits, std::span<const LabeledItem> items,
                                    const ClassRegistry& registry) {
  if (logits.size(0) != static_cast<std::int64_t>(items.size())) {
    throw Error(ErrorCode::LengthMismatch, "logit rows do not match item count");
  }
  const auto probs = torch::softmax(logits.to(torch::kDouble), 1).contiguous();
  std::vector<std::int64_t> truth;
  std::vector<std::int64_t> predicted;
  std::vector<ItemPrediction> predictions;
  for (std::size_t n = 0; n < items.size(); ++n) {
    const auto row = probs[static_cast<std::int64_t>(n)];
    ItemPrediction p;
    p.path = items[n].path;
    p.true_class = items[n].class_index;
    p.predicted_class = argmax_lowest(row);
    p.probabilities.assign(row.data_ptr<double>(), row.data_ptr<double>() + row.numel());
    truth.push_back(p.true_class);
    predicted.push_back(p.predicted_class);
    predictions.push_back(std::move(p));
  }
  auto cm = confusion_matrix(truth, predicted, registry);
  auto metrics = class_metrics(cm);
  return {std::move(cm), std::move(metrics), std::move(predictions)};
}

EvaluationReport evaluate(const ClassifierModel& model, std::span<const LabeledItem> items,
                          const ClassRegistry& registry, int batch_size) {
  if (static_cast<std::size_t>(model.num_classes()) != registry.count()) {
    throw Error(ErrorCode::RegistryMismatch, "model outputs do not match the class registry");
  }
  return report_from_logits(infer_logits(model, items, batch_size), items, registry);
}

void write_report_json(const EvaluationReport& report, const std::filesystem::path& path) {
  const auto& cm = report.matrix;
  json classes = json::array();
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const auto& pc = report.metrics.per_class[c];
    classes.push_back({{"class", cm.registry().name(c)}, {"precision", pc.precision}, {"recall", pc.recall}, {"f1", pc.f1}});
  }
  json matrix = json::array();
  for (std::size_t i = 0; i < cm.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < cm.size(); ++j) row.push_back(cm.at(i, j));
    matrix.push_back(std::move(row));
  }
  json predictions = json::array();
  for (const auto& p : report.predictions) {
    predictions.push_back({{"path", p.path.generic_string()},
                           {"true_class", p.true_class},
                           {"predicted_class", p.predicted_class},
                           {"probabilities", p.probabilities}});
  }
  json doc = {{"format", "tealeaf-report"},
              {"registry", cm.registry().names()},
              {"classes", std::move(classes)},
              {"accuracy", report.metrics.accuracy},
              {"matrix", std::move(matrix)},
              {"predictions", std::move(predictions)}};
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorCode::IoFailure, "cannot write report " + path.string());
  }
}

ConfusionMatrix read_report_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoFailure, "cannot open report " + path.string());
  }
  try {
    const json doc = json::parse(in);
    ClassRegistry registry(doc.at("registry").get<std::vector<std::string>>());
    std::vector<std::int64_t> counts;
    for (const auto& row : doc.at("matrix")) {
      for (const auto& v : row) counts.push_back(v.get<std::int64_t>());
    }
    return ConfusionMatrix(std::move(registry), std::move(counts));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoFailure, "malformed report " + path.string() + ": " + e.what());
  }
}

std::string render_report_table(const ConfusionMatrix& cm, const ClassMetrics& metrics, const std::string& model_name) {
  std::size_t width = 8;
  for (const auto& n : cm.registry().names()) width = std::max(width, n.size());
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  if (!model_name.empty()) {
    os << model_name << '\n';
  }
  os << std::left << std::setw(static_cast<int>(width)) << "Class" << "  Precision  Recall  F1-Score\n";
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const auto& pc = metrics.per_class[c];
    os << std::left << std::setw(static_cast<int>(width)) << cm.registry().name(c) << "  " << std::right
       << std::setw(9) << pc.precision << "  " << std::setw(6) << pc.recall << "  " << std::setw(8) << pc.f1 << '\n';
  }
  os << std::left << std::setw(static_cast<int>(width)) << "Accuracy" << "  " << std::right << std::setw(9)
     << metrics.accuracy << '\n';
  return os.str();
}

}  // namespace tealeaf
