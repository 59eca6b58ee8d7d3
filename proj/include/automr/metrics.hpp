#pragma once

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "automr/error.hpp"
#include "automr/tensor.hpp"

namespace automr {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

// Classification summary. confusion[t][p] counts windows of true class t
// predicted as p. Macro averages run over classes with support > 0; a class
// that is never predicted has precision 0.
struct MetricsReport {
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t total = 0;

  std::size_t num_classes() const noexcept { return confusion.size(); }
};

// Argmax per row; ties go to the lowest class id.
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  expect_rank(logits.shape(), 2, "argmax input");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (logits[r * cols + c] > logits[r * cols + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

inline MetricsReport metrics_from_confusion(std::vector<std::vector<std::size_t>> cm,
                                            double loss = std::numeric_limits<double>::quiet_NaN()) {
  MetricsReport m;
  const std::size_t C = cm.size();
  m.confusion = std::move(cm);
  m.per_class.resize(C);
  m.loss = loss;
  std::size_t trace = 0;
  std::vector<std::size_t> predicted(C, 0);
  for (std::size_t t = 0; t < C; ++t) {
    if (m.confusion[t].size() != C) throw ShapeError("confusion matrix must be square");
    for (std::size_t p = 0; p < C; ++p) {
      m.per_class[t].support += m.confusion[t][p];
      predicted[p] += m.confusion[t][p];
    }
    trace += m.confusion[t][t];
    m.total += m.per_class[t].support;
  }
  m.accuracy = m.total ? static_cast<double>(trace) / static_cast<double>(m.total) : 0.0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < C; ++c) {
    auto& pc = m.per_class[c];
    const double tp = static_cast<double>(m.confusion[c][c]);
    pc.precision = predicted[c] ? tp / static_cast<double>(predicted[c]) : 0.0;
    pc.recall = pc.support ? tp / static_cast<double>(pc.support) : 0.0;
    pc.f1 = pc.precision + pc.recall > 0.0 ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall) : 0.0;
    if (pc.support) {
      ++supported;
      m.macro_precision += pc.precision;
      m.macro_recall += pc.recall;
      m.macro_f1 += pc.f1;
    }
  }
  if (supported) {
    m.macro_precision /= static_cast<double>(supported);
    m.macro_recall /= static_cast<double>(supported);
    m.macro_f1 /= static_cast<double>(supported);
  }
  return m;
}

inline MetricsReport compute_metrics(std::span<const int> labels, std::span<const int> predictions,
                                     std::size_t num_classes,
                                     double loss = std::numeric_limits<double>::quiet_NaN()) {
  if (labels.size() != predictions.size()) throw ShapeError("metrics: label and prediction counts differ");
  std::vector<std::vector<std::size_t>> cm(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes || static_cast<std::size_t>(p) >= num_classes)
      throw ShapeError("metrics: class id out of range at index " + std::to_string(i));
    ++cm[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return metrics_from_confusion(std::move(cm), loss);
}

inline nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline void to_json(nlohmann::json& j, const MetricsReport& m) {
  nlohmann::json pc = nlohmann::json::array();
  for (const auto& c : m.per_class)
    pc.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  j = {{"accuracy", m.accuracy},
       {"macro_precision", m.macro_precision},
       {"macro_recall", m.macro_recall},
       {"macro_f1", m.macro_f1},
       {"loss", json_number(m.loss)},
       {"total", m.total},
       {"per_class", pc},
       {"confusion", m.confusion}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& m) {
  m = metrics_from_confusion(j.at("confusion").get<std::vector<std::vector<std::size_t>>>(),
                             j.at("loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                    : j.at("loss").get<double>());
}

}  // namespace automr
