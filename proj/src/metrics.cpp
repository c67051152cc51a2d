#include "vlmcpl/metrics.hpp"

#include <stdexcept>

namespace vlmcpl {

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto v : row) t += v;
  return t;
}

ConfusionMatrix confusion(std::span<const std::uint32_t> true_labels, std::span<const std::uint32_t> pred_labels,
                          std::size_t num_classes) {
  if (true_labels.size() != pred_labels.size()) throw std::invalid_argument("confusion: length mismatch");
  ConfusionMatrix cm;
  cm.counts.assign(num_classes, std::vector<std::uint32_t>(num_classes, 0));
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (true_labels[i] >= num_classes || pred_labels[i] >= num_classes)
      throw std::invalid_argument("confusion: label out of range at position " + std::to_string(i));
    ++cm.counts[true_labels[i]][pred_labels[i]];
  }
  return cm;
}

MacroScores macro_scores(const ConfusionMatrix& cm) {
  const std::size_t c = cm.num_classes();
  const auto total = cm.total();
  if (c == 0 || total == 0) throw std::invalid_argument("macro_scores: empty confusion matrix");
  std::uint64_t trace = 0;
  double f1_sum = 0.0, recall_sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += cm.counts[k][j];
      col += cm.counts[j][k];
    }
    const double tp = cm.counts[k][k];
    trace += cm.counts[k][k];
    const double precision = col == 0 ? 0.0 : tp / static_cast<double>(col);
    const double recall = row == 0 ? 0.0 : tp / static_cast<double>(row);
    recall_sum += recall;
    if (precision + recall > 0.0) f1_sum += 2.0 * precision * recall / (precision + recall);
  }
  MacroScores s;
  s.acc = static_cast<double>(trace) / static_cast<double>(total);
  s.macro_f1 = f1_sum / static_cast<double>(c);
  s.macro_recall = recall_sum / static_cast<double>(c);
  return s;
}

PseudoLabelReport pseudo_label_report(const SelectionResult& selection, std::span<const std::uint32_t> ground_truth,
                                      std::size_t num_classes) {
  selection.validate();
  if (ground_truth.size() != selection.universe_size())
    throw std::invalid_argument("pseudo_label_report: ground truth missing for some samples");
  std::vector<std::uint32_t> truth;
  truth.reserve(selection.selected.size());
  for (auto i : selection.selected) truth.push_back(ground_truth[i]);
  PseudoLabelReport report;
  report.n = selection.selected.size();
  report.confusion = confusion(truth, selection.labels, num_classes);
  if (report.n > 0) report.scores = macro_scores(report.confusion);
  return report;
}

nlohmann::ordered_json to_json(const PseudoLabelReport& report) {
  nlohmann::ordered_json j;
  j["n"] = report.n;
  j["acc"] = report.scores.acc;
  j["macro_f1"] = report.scores.macro_f1;
  j["macro_recall"] = report.scores.macro_recall;
  j["confusion"] = report.confusion.counts;
  return j;
}

}  // namespace vlmcpl
