// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmodal/labels.hpp"

namespace xmodal {

struct PerClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct AggregateMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

// Square count matrix, rows = gold class, columns = predicted class, in the
// canonical class order.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_classes)
      : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return num_classes_; }
  std::uint64_t at(std::size_t gold, std::size_t pred) const {
    return counts_[gold * num_classes_ + pred];
  }
  void add(std::size_t gold, std::size_t pred, std::uint64_t n = 1);
  std::uint64_t row_sum(std::size_t gold) const;
  std::uint64_t col_sum(std::size_t pred) const;
  std::uint64_t total() const;

 private:
  std::size_t num_classes_ = 0;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const EmotionLabel> golds,
                                 std::span<const EmotionLabel> preds);

// precision = TP/(TP+FP), recall = TP/(TP+FN), f1 = harmonic mean; every 0/0
// resolves to 0.
std::vector<PerClassMetrics> per_class_prf(const ConfusionMatrix& cm);

// Unweighted mean over all classes, zero-score classes included.
AggregateMetrics macro_average(std::span<const PerClassMetrics> per_class);

// Support-weighted mean; throws on zero total support.
AggregateMetrics weighted_average(std::span<const PerClassMetrics> per_class);

// Row percentages: count / row_sum * 100. Rows without support come back all
// zero with their flag set.
struct RowNormalized {
  std::vector<std::vector<double>> percent;
  std::vector<bool> zero_support;
};
RowNormalized row_normalize(const ConfusionMatrix& cm);

double accuracy(const ConfusionMatrix& cm);

struct EvalReport {
  std::vector<PerClassMetrics> per_class;
  AggregateMetrics macro;
  AggregateMetrics weighted;
  ConfusionMatrix confusion;
};

EvalReport evaluate_predictions(std::span<const EmotionLabel> golds,
                                std::span<const EmotionLabel> preds);

// Aligned text table: one row per class with precision/recall/F1/support,
// then Macro Avg. and Weighted Avg. rows. Three decimal places.
std::string render_report_table(const EvalReport& report);
// Machine-readable report (JSON text).
std::string report_to_json(const EvalReport& report);
// Row-normalized confusion percentages: header, then one line per gold class
// with the row label and one column per predicted class, one decimal place.
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace xmodal
