// SPDX-License-Identifier: Apache-2.0
#include "xmodal/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "xmodal/common.hpp"

namespace xmodal {

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * precision * recall / denom;
}

void ConfusionMatrix::add(std::size_t gold, std::size_t pred, std::uint64_t n) {
  if (gold >= num_classes_ || pred >= num_classes_)
    throw ValueError("ConfusionMatrix: class index out of range");
  counts_[gold * num_classes_ + pred] += n;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t gold) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < num_classes_; ++p) s += at(gold, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < num_classes_; ++g) s += at(g, pred);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (std::uint64_t c : counts_) s += c;
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const EmotionLabel> golds,
                                 std::span<const EmotionLabel> preds) {
  if (golds.size() != preds.size())
    throw ValueError("confusion_matrix: " + std::to_string(golds.size()) + " golds vs " +
                     std::to_string(preds.size()) + " predictions");
  if (golds.empty()) throw ValueError("confusion_matrix: no samples");
  ConfusionMatrix cm(kNumEmotions);
  for (std::size_t i = 0; i < golds.size(); ++i)
    cm.add(static_cast<std::size_t>(golds[i]), static_cast<std::size_t>(preds[i]));
  return cm;
}

std::vector<PerClassMetrics> per_class_prf(const ConfusionMatrix& cm) {
  std::vector<PerClassMetrics> out(cm.num_classes());
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double gold_total = static_cast<double>(cm.row_sum(c));
    const double pred_total = static_cast<double>(cm.col_sum(c));
    out[c].support = cm.row_sum(c);
    out[c].precision = pred_total == 0.0 ? 0.0 : tp / pred_total;
    out[c].recall = gold_total == 0.0 ? 0.0 : tp / gold_total;
    out[c].f1 = f1_score(out[c].precision, out[c].recall);
  }
  return out;
}

AggregateMetrics macro_average(std::span<const PerClassMetrics> per_class) {
  if (per_class.empty()) throw ValueError("macro_average: no classes");
  AggregateMetrics agg;
  for (const auto& pc : per_class) {
    agg.precision += pc.precision;
    agg.recall += pc.recall;
    agg.f1 += pc.f1;
  }
  const double n = static_cast<double>(per_class.size());
  agg.precision /= n;
  agg.recall /= n;
  agg.f1 /= n;
  return agg;
}

AggregateMetrics weighted_average(std::span<const PerClassMetrics> per_class) {
  double total = 0;
  for (const auto& pc : per_class) total += static_cast<double>(pc.support);
  if (total == 0.0) throw ValueError("weighted_average: zero total support");
  AggregateMetrics agg;
  for (const auto& pc : per_class) {
    const double w = static_cast<double>(pc.support);
    agg.precision += w * pc.precision;
    agg.recall += w * pc.recall;
    agg.f1 += w * pc.f1;
  }
  agg.precision /= total;
  agg.recall /= total;
  agg.f1 /= total;
  return agg;
}

RowNormalized row_normalize(const ConfusionMatrix& cm) {
  RowNormalized out;
  out.percent.assign(cm.num_classes(), std::vector<double>(cm.num_classes(), 0.0));
  out.zero_support.assign(cm.num_classes(), false);
  for (std::size_t g = 0; g < cm.num_classes(); ++g) {
    const std::uint64_t rs = cm.row_sum(g);
    if (rs == 0) {
      out.zero_support[g] = true;
      continue;
    }
    for (std::size_t p = 0; p < cm.num_classes(); ++p)
      out.percent[g][p] = static_cast<double>(cm.at(g, p)) / static_cast<double>(rs) * 100.0;
  }
  return out;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) return 0.0;
  std::uint64_t diag = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) diag += cm.at(c, c);
  return static_cast<double>(diag) / static_cast<double>(total);
}

EvalReport evaluate_predictions(std::span<const EmotionLabel> golds,
                                std::span<const EmotionLabel> preds) {
  EvalReport report;
  report.confusion = confusion_matrix(golds, preds);
  report.per_class = per_class_prf(report.confusion);
  report.macro = macro_average(report.per_class);
  report.weighted = weighted_average(report.per_class);
  return report;
}

std::string render_report_table(const EvalReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "Categories" << std::right << std::setw(10) << "precision"
     << std::setw(8) << "recall" << std::setw(10) << "F1 score" << std::setw(9) << "support" << "\n";
  os << std::fixed << std::setprecision(3);
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& pc = report.per_class[c];
    os << std::left << std::setw(14) << kEmotionNames[c] << std::right << std::setw(10) << pc.precision
       << std::setw(8) << pc.recall << std::setw(10) << pc.f1 << std::setw(9) << pc.support << "\n";
  }
  os << std::left << std::setw(14) << "Macro Avg." << std::right << std::setw(10)
     << report.macro.precision << std::setw(8) << report.macro.recall << std::setw(10)
     << report.macro.f1 << "\n";
  os << std::left << std::setw(14) << "Weighted Avg." << std::right << std::setw(10)
     << report.weighted.precision << std::setw(8) << report.weighted.recall << std::setw(10)
     << report.weighted.f1 << "\n";
  return os.str();
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& pc = report.per_class[c];
    nlohmann::ordered_json row;
    row["precision"] = pc.precision;
    row["recall"] = pc.recall;
    row["f1"] = pc.f1;
    row["support"] = pc.support;
    j["per_class"][std::string(kEmotionNames[c])] = row;
  }
  j["macro"] = {{"precision", report.macro.precision},
                {"recall", report.macro.recall},
                {"f1", report.macro.f1}};
  j["weighted"] = {{"precision", report.weighted.precision},
                   {"recall", report.weighted.recall},
                   {"f1", report.weighted.f1}};
  auto& cmj = j["confusion"];
  for (std::size_t g = 0; g < report.confusion.num_classes(); ++g) {
    std::vector<std::uint64_t> row(report.confusion.num_classes());
    for (std::size_t p = 0; p < row.size(); ++p) row[p] = report.confusion.at(g, p);
    cmj.push_back(row);
  }
  return j.dump(2) + "\n";
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  const auto rn = row_normalize(cm);
  std::ostringstream os;
  os << "gold";
  for (std::size_t p = 0; p < cm.num_classes(); ++p) os << "," << kEmotionNames[p];
  os << "\n" << std::fixed << std::setprecision(1);
  for (std::size_t g = 0; g < cm.num_classes(); ++g) {
    os << kEmotionNames[g];
    for (std::size_t p = 0; p < cm.num_classes(); ++p) os << "," << rn.percent[g][p];
    os << "\n";
  }
  return os.str();
}

}  // namespace xmodal
