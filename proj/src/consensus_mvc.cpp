#include "vlmcpl/consensus_mvc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace vlmcpl {

namespace {

constexpr double kRowSumTolerance = 1e-4;

void check_stochastic(std::span<const float> row) {
  double sum = 0.0;
  for (float v : row) {
    if (!(v >= 0.0f) || !std::isfinite(v)) throw std::invalid_argument("probability row has invalid entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowSumTolerance)
    throw std::invalid_argument("probability row sums to " + std::to_string(sum));
}

// Indices ordered by (entropy ascending, sample id ascending).
std::vector<std::uint32_t> entropy_order(const MvcScores& scores, std::span<const std::uint32_t> pool) {
  std::vector<std::uint32_t> order(pool.begin(), pool.end());
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores.entropy[a] != scores.entropy[b]) return scores.entropy[a] < scores.entropy[b];
    return scores.sample_ids[a] < scores.sample_ids[b];
  });
  return order;
}

void check_percent(double percent) {
  if (!(percent > 0.0 && percent <= 100.0))
    throw std::invalid_argument("selection percent must be in (0, 100], got " + std::to_string(percent));
}

SelectionResult from_mask(const MvcScores& scores, const std::vector<bool>& keep, StageTag tag) {
  SelectionResult out;
  out.stage = tag;
  out.sample_ids = scores.sample_ids;
  for (std::uint32_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) {
      out.selected.push_back(i);
      out.labels.push_back(scores.pseudo_label[i]);
    } else {
      out.rejected.push_back(i);
    }
  }
  return out;
}

}  // namespace

const char* to_string(StageTag tag) {
  switch (tag) {
    case StageTag::mvc: return "mvc";
    case StageTag::cmvc: return "cmvc";
    case StageTag::pfc: return "pfc";
    case StageTag::osp: return "osp";
  }
  return "unknown";
}

void MultiViewPredictions::validate() const {
  if (num_views == 0) throw std::invalid_argument("multi-view predictions need K >= 1");
  if (num_classes == 0) throw std::invalid_argument("multi-view predictions need at least one class");
  if (probs.size() != sample_ids.size() * num_views * num_classes)
    throw std::invalid_argument("multi-view payload does not match [N x K x C]");
}

std::vector<std::uint32_t> SelectionResult::selected_mask() const {
  std::vector<std::uint32_t> mask(sample_ids.size(), 0);
  for (auto i : selected) mask[i] = 1;
  return mask;
}

std::vector<std::uint32_t> SelectionResult::label_column(std::uint32_t fill) const {
  std::vector<std::uint32_t> col(sample_ids.size(), fill);
  for (std::size_t j = 0; j < selected.size(); ++j) col[selected[j]] = labels[j];
  return col;
}

void SelectionResult::validate() const {
  if (labels.size() != selected.size()) throw std::logic_error("selection labels not parallel to indices");
  std::vector<int> seen(sample_ids.size(), 0);
  for (auto i : selected) {
    if (i >= seen.size() || seen[i]++) throw std::logic_error("selection index invalid or repeated");
  }
  for (auto i : rejected) {
    if (i >= seen.size() || seen[i]++) throw std::logic_error("rejected index invalid or repeated");
  }
  if (selected.size() + rejected.size() != sample_ids.size())
    throw std::logic_error("selection does not cover every sample");
  if (!std::is_sorted(selected.begin(), selected.end()) || !std::is_sorted(rejected.begin(), rejected.end()))
    throw std::logic_error("selection indices not ascending");
}

double count_entropy(std::span<const std::uint32_t> counts, std::uint32_t total) {
  std::vector<std::uint32_t> nonzero;
  for (auto c : counts)
    if (c > 0) nonzero.push_back(c);
  std::sort(nonzero.begin(), nonzero.end());
  double h = 0.0;
  for (auto c : nonzero) {
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  // Single-atom distributions are exactly zero; avoid returning -0.0.
  if (nonzero.size() <= 1) return 0.0;
  // Rounding can push an even split a few ulps above its bound ln(support).
  return std::min(h, std::log(static_cast<double>(nonzero.size())));
}

VoteResult vote_entropy(std::span<const float> views, std::size_t num_views, std::size_t num_classes) {
  if (num_views == 0 || num_classes == 0) throw std::invalid_argument("vote_entropy needs K, C >= 1");
  if (views.size() != num_views * num_classes) throw std::invalid_argument("vote_entropy: shape mismatch");
  std::vector<std::uint32_t> counts(num_classes, 0);
  for (std::size_t k = 0; k < num_views; ++k) {
    const auto row = views.subspan(k * num_classes, num_classes);
    check_stochastic(row);
    ++counts[argmax_index(row)];
  }
  VoteResult out;
  out.vote_dist.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c)
    out.vote_dist[c] = static_cast<double>(counts[c]) / static_cast<double>(num_views);
  out.entropy = count_entropy(counts, static_cast<std::uint32_t>(num_views));
  out.pseudo_label = static_cast<std::uint32_t>(argmax_index(std::span<const std::uint32_t>(counts)));
  return out;
}

MvcScores score_views(const MultiViewPredictions& predictions) {
  predictions.validate();
  MvcScores scores;
  scores.sample_ids = predictions.sample_ids;
  const std::size_t n = predictions.size();
  scores.pseudo_label.resize(n);
  scores.entropy.resize(n);
  scores.vote_dist.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = vote_entropy(predictions.views_of(i), predictions.num_views, predictions.num_classes);
    scores.pseudo_label[i] = r.pseudo_label;
    scores.entropy[i] = r.entropy;
    scores.vote_dist[i] = std::move(r.vote_dist);
  }
  return scores;
}

std::size_t selection_count(std::size_t n, double percent) {
  check_percent(percent);
  if (n == 0) return 0;
  // Absorbs rounding when n * percent / 100 should be a whole number.
  const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(n) * percent / 100.0 + 1e-9));
  return std::clamp<std::size_t>(count, 1, n);
}

SelectionResult select_mvc(const MvcScores& scores, double percent) {
  check_percent(percent);
  const std::size_t n = scores.size();
  if (n == 0) throw std::invalid_argument("select_mvc: no samples");
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  const auto order = entropy_order(scores, all);
  std::vector<bool> keep(n, false);
  const std::size_t take = selection_count(n, percent);
  for (std::size_t j = 0; j < take; ++j) keep[order[j]] = true;
  return from_mask(scores, keep, StageTag::mvc);
}

SelectionResult select_cmvc(const MvcScores& scores, double percent) {
  check_percent(percent);
  const std::size_t n = scores.size();
  if (n == 0) throw std::invalid_argument("select_cmvc: no samples");
  std::map<std::uint32_t, std::vector<std::uint32_t>> groups;
  for (std::uint32_t i = 0; i < n; ++i) groups[scores.pseudo_label[i]].push_back(i);
  std::vector<bool> keep(n, false);
  for (const auto& [label, members] : groups) {
    const auto order = entropy_order(scores, members);
    const std::size_t take = selection_count(members.size(), percent);
    for (std::size_t j = 0; j < take; ++j) keep[order[j]] = true;
  }
  return from_mask(scores, keep, StageTag::cmvc);
}

}  // namespace vlmcpl
