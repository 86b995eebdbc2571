#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "convonet/model.hpp"
#include "convonet/train.hpp"

namespace convonet {

// Emission order for every metrics CSV.
inline constexpr std::array<const char*, 8> kMetricOrder = {
    "accuracy", "precision", "recall",      "f1_score",
    "mcc",      "specificity", "gmean1",    "gmean2"};

// Rows are actual classes, columns predicted.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;  // c*c, row-major
  std::vector<std::string> class_names;

  std::size_t at(std::size_t actual, std::size_t predicted) const {
    return counts[actual * classes + predicted];
  }
  std::size_t& at(std::size_t actual, std::size_t predicted) {
    return counts[actual * classes + predicted];
  }
  std::size_t total() const {
    std::size_t t = 0;
    for (std::size_t v : counts) t += v;
    return t;
  }
};

inline ConfusionMatrix confusion(const std::vector<std::size_t>& predictions,
                                 const std::vector<std::size_t>& actuals,
                                 std::size_t classes) {
  if (predictions.size() != actuals.size())
    throw std::invalid_argument("confusion: prediction/actual length mismatch");
  if (predictions.empty())
    throw std::invalid_argument("confusion: empty input");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(classes * classes, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] >= classes || actuals[i] >= classes)
      throw std::invalid_argument("confusion: class index out of range");
    ++cm.at(actuals[i], predictions[i]);
  }
  return cm;
}

enum class Averaging { binary, macro, micro };

inline const char* to_string(Averaging a) {
  switch (a) {
    case Averaging::binary: return "binary";
    case Averaging::macro: return "macro";
    default: return "micro";
  }
}

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  double specificity = 0.0;
  double gmean1 = 0.0;
  double gmean2 = 0.0;
  Averaging averaging = Averaging::binary;

  // Table II order
  std::array<double, 8> values() const {
    return {accuracy, precision, recall, f1, mcc, specificity, gmean1, gmean2};
  }
};

namespace detail {
// 0/0 ratios are defined as 0 so degenerate matrices stay NaN-free.
inline double ratio(double num, double den) {
  return den == 0.0 ? 0.0 : num / den;
}

// Generalized (c x c) Matthews correlation; reduces to the familiar
// binary formula at c = 2. Zero denominator yields 0.
inline double generalized_mcc(const ConfusionMatrix& cm) {
  const std::size_t c = cm.classes;
  double s = 0.0, trace = 0.0;
  std::vector<double> actual(c, 0.0), predicted(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    trace += static_cast<double>(cm.at(i, i));
    for (std::size_t j = 0; j < c; ++j) {
      const double v = static_cast<double>(cm.at(i, j));
      s += v;
      actual[i] += v;
      predicted[j] += v;
    }
  }
  double dot = 0.0, p2 = 0.0, t2 = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    dot += actual[k] * predicted[k];
    p2 += predicted[k] * predicted[k];
    t2 += actual[k] * actual[k];
  }
  const double num = s * trace - dot;
  const double den = std::sqrt((s * s - p2) * (s * s - t2));
  return den == 0.0 ? 0.0 : num / den;
}
}  // namespace detail

// The eight Table-style metrics for a 2x2 matrix; class 1 is positive.
// Specificity is TN/(TN+FP), the "negatives correctly classified" reading.
inline MetricsReport binary_metrics(const ConfusionMatrix& cm) {
  if (cm.classes != 2)
    throw std::invalid_argument("binary_metrics: expects a 2x2 matrix");
  if (cm.total() == 0)
    throw std::invalid_argument("binary_metrics: empty matrix");
  const double tp = static_cast<double>(cm.at(1, 1));
  const double tn = static_cast<double>(cm.at(0, 0));
  const double fp = static_cast<double>(cm.at(0, 1));
  const double fn = static_cast<double>(cm.at(1, 0));

  MetricsReport r;
  r.averaging = Averaging::binary;
  r.accuracy = detail::ratio(tp + tn, tp + fp + tn + fn);
  r.precision = detail::ratio(tp, tp + fp);
  r.recall = detail::ratio(tp, tp + fn);
  r.f1 = detail::ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  r.mcc = detail::generalized_mcc(cm);
  r.specificity = detail::ratio(tn, tn + fp);
  r.gmean1 = std::sqrt(r.precision * r.recall);
  r.gmean2 = std::sqrt(r.specificity * r.recall);
  return r;
}

// One-vs-rest per class. Macro averages the per-class ratios; micro pools
// the counts first (which makes precision == recall == accuracy for
// single-label data). MCC is the generalized formulation either way.
inline MetricsReport multiclass_metrics(const ConfusionMatrix& cm,
                                        Averaging averaging) {
  if (cm.classes < 2)
    throw std::invalid_argument("multiclass_metrics: need >= 2 classes");
  if (averaging == Averaging::binary)
    throw std::invalid_argument(
        "multiclass_metrics: averaging must be macro or micro");
  const std::size_t c = cm.classes;
  const double total = static_cast<double>(cm.total());
  if (total == 0.0)
    throw std::invalid_argument("multiclass_metrics: empty matrix");

  double trace = 0.0;
  for (std::size_t k = 0; k < c; ++k)
    trace += static_cast<double>(cm.at(k, k));

  MetricsReport r;
  r.averaging = averaging;
  r.accuracy = trace / total;
  r.mcc = detail::generalized_mcc(cm);

  if (averaging == Averaging::macro) {
    double p = 0.0, rec = 0.0, spec = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      double tp = static_cast<double>(cm.at(k, k));
      double actual_k = 0.0, predicted_k = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        actual_k += static_cast<double>(cm.at(k, j));
        predicted_k += static_cast<double>(cm.at(j, k));
      }
      const double fp = predicted_k - tp;
      const double fn = actual_k - tp;
      const double tn = total - tp - fp - fn;
      p += detail::ratio(tp, tp + fp);
      rec += detail::ratio(tp, tp + fn);
      spec += detail::ratio(tn, tn + fp);
    }
    r.precision = p / static_cast<double>(c);
    r.recall = rec / static_cast<double>(c);
    r.specificity = spec / static_cast<double>(c);
  } else {
    double tp = trace;
    double fp = total - trace;  // pooled over one-vs-rest
    double fn = total - trace;
    double tn = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      double actual_k = 0.0, predicted_k = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        actual_k += static_cast<double>(cm.at(k, j));
        predicted_k += static_cast<double>(cm.at(j, k));
      }
      tn += total - actual_k - predicted_k +
            static_cast<double>(cm.at(k, k));
    }
    r.precision = detail::ratio(tp, tp + fp);
    r.recall = detail::ratio(tp, tp + fn);
    r.specificity = detail::ratio(tn, tn + fp);
  }
  r.f1 = detail::ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  r.gmean1 = std::sqrt(r.precision * r.recall);
  r.gmean2 = std::sqrt(r.specificity * r.recall);
  return r;
}

inline MetricsReport metrics_for(const ConfusionMatrix& cm,
                                 Averaging averaging) {
  if (cm.classes == 2 && averaging == Averaging::binary)
    return binary_metrics(cm);
  return multiclass_metrics(cm, averaging);
}

struct EvaluationResult {
  MetricsReport report;
  ConfusionMatrix matrix;
  std::vector<std::size_t> predictions;
};

// Deterministic (dropout off) prediction of every example, then metrics.
template <typename T>
EvaluationResult evaluate(const Model<T>& model,
                          const std::vector<LabeledExample>& examples,
                          const PipelineContext& ctx,
                          Averaging averaging = Averaging::macro,
                          const std::vector<std::string>& class_names = {}) {
  if (examples.empty())
    throw InputError("evaluate: no examples");
  std::vector<std::size_t> predictions, actuals;
  predictions.reserve(examples.size());
  for (const auto& ex : examples) {
    auto paragraph = build_paragraph<T>(ex.text, *ctx.embeddings, ctx.m,
                                        ctx.n, ctx.single_sequence);
    predictions.push_back(predicted_class(forward(model, paragraph, Mode::eval)));
    actuals.push_back(ex.label);
  }
  const std::size_t classes =
      model.config.task == Task::binary ? 2 : model.config.num_classes;
  EvaluationResult res;
  res.matrix = confusion(predictions, actuals, classes);
  res.matrix.class_names = class_names;
  res.report = model.config.task == Task::binary
                   ? binary_metrics(res.matrix)
                   : multiclass_metrics(res.matrix, averaging);
  res.predictions = std::move(predictions);
  return res;
}

}  // namespace convonet
