#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "vlmcpl/consensus_mvc.hpp"

namespace vlmcpl {

// counts[true][predicted]
struct ConfusionMatrix {
  std::vector<std::vector<std::uint32_t>> counts;

  std::size_t num_classes() const noexcept { return counts.size(); }
  std::uint64_t total() const noexcept;
};

struct MacroScores {
  double acc = 0.0;
  double macro_f1 = 0.0;
  double macro_recall = 0.0;
};

struct PseudoLabelReport {
  std::size_t n = 0;
  MacroScores scores;
  ConfusionMatrix confusion;
};

ConfusionMatrix confusion(std::span<const std::uint32_t> true_labels, std::span<const std::uint32_t> pred_labels,
                          std::size_t num_classes);

// Classes with a zero precision or recall denominator contribute 0 to the
// macro means, which always divide by C.
MacroScores macro_scores(const ConfusionMatrix& cm);

// Quality of the selected pseudo-labels against ground truth indexed like
// selection.sample_ids.
PseudoLabelReport pseudo_label_report(const SelectionResult& selection, std::span<const std::uint32_t> ground_truth,
                                      std::size_t num_classes);

// {n, acc, macro_f1, macro_recall, confusion}
nlohmann::ordered_json to_json(const PseudoLabelReport& report);

}  // namespace vlmcpl
