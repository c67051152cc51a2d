#pragma once

// Multi-view consensus: hard votes over K augmented views, vote entropy, and
// percentile selection of the most consistent samples (globally or per class).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlmcpl/matrix.hpp"

namespace vlmcpl {

inline constexpr double kDefaultSelectPercent = 30.0;
inline constexpr std::size_t kDefaultViews = 20;

// [N x K x C] probabilities, one K x C block per sample.
struct MultiViewPredictions {
  std::size_t num_views = 0;
  std::size_t num_classes = 0;
  std::vector<float> probs;
  std::vector<std::string> sample_ids;

  std::size_t size() const noexcept { return sample_ids.size(); }
  std::span<const float> views_of(std::size_t i) const {
    return {probs.data() + i * num_views * num_classes, num_views * num_classes};
  }
  void validate() const;
};

struct VoteResult {
  std::uint32_t pseudo_label = 0;
  double entropy = 0.0;
  std::vector<double> vote_dist;
};

struct MvcScores {
  std::vector<std::string> sample_ids;
  std::vector<std::uint32_t> pseudo_label;
  std::vector<double> entropy;
  std::vector<std::vector<double>> vote_dist;

  std::size_t size() const noexcept { return sample_ids.size(); }
};

enum class StageTag { mvc, cmvc, pfc, osp };

const char* to_string(StageTag tag);

// Partition of a sample universe into a labelled subset and the rest.
// Indices refer to positions in sample_ids and are kept ascending.
struct SelectionResult {
  StageTag stage = StageTag::mvc;
  std::vector<std::string> sample_ids;
  std::vector<std::uint32_t> selected;
  std::vector<std::uint32_t> labels;  // parallel to selected
  std::vector<std::uint32_t> rejected;

  std::size_t universe_size() const noexcept { return sample_ids.size(); }
  std::vector<std::uint32_t> selected_mask() const;

  // Full-length label vector; rejected samples get `fill`.
  std::vector<std::uint32_t> label_column(std::uint32_t fill) const;

  // Throws std::logic_error unless selected/rejected partition the universe.
  void validate() const;
};

// Hard votes: each view is argmaxed, votes are averaged, and the entropy of
// the vote distribution is taken with natural log and 0 log 0 = 0.
VoteResult vote_entropy(std::span<const float> views, std::size_t num_views, std::size_t num_classes);

// Entropy of a discrete distribution given by counts. Terms are summed in
// ascending count order so the value depends only on the count multiset.
double count_entropy(std::span<const std::uint32_t> counts, std::uint32_t total);

MvcScores score_views(const MultiViewPredictions& predictions);

// floor(n * percent / 100), at least 1 when n > 0.
std::size_t selection_count(std::size_t n, double percent);

SelectionResult select_mvc(const MvcScores& scores, double percent);
SelectionResult select_cmvc(const MvcScores& scores, double percent);

}  // namespace vlmcpl
