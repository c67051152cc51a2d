#include "vlmcpl/consensus_pfc.hpp"

#include <algorithm>
#include <stdexcept>

namespace vlmcpl {

SelectionResult pfc_filter(const SelectionResult& prompt_labels, const ClusterAssignment& clusters,
                           const ClassMapping& mapping) {
  prompt_labels.validate();
  if (clusters.cluster_of.size() != prompt_labels.selected.size())
    throw std::invalid_argument("pfc_filter: clusters cover " + std::to_string(clusters.cluster_of.size()) +
                                " samples, selection has " + std::to_string(prompt_labels.selected.size()));

  SelectionResult out;
  out.stage = StageTag::pfc;
  out.sample_ids = prompt_labels.sample_ids;
  std::vector<bool> keep(out.sample_ids.size(), false);
  std::vector<std::uint32_t> label_of(out.sample_ids.size(), 0);
  for (std::size_t j = 0; j < prompt_labels.selected.size(); ++j) {
    const auto cluster = clusters.cluster_of[j];
    if (cluster >= mapping.perm.size()) throw std::invalid_argument("pfc_filter: cluster index outside mapping");
    if (prompt_labels.labels[j] == mapping.perm[cluster]) {
      keep[prompt_labels.selected[j]] = true;
      label_of[prompt_labels.selected[j]] = prompt_labels.labels[j];
    }
  }
  for (std::uint32_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) {
      out.selected.push_back(i);
      out.labels.push_back(label_of[i]);
    } else {
      out.rejected.push_back(i);
    }
  }
  return out;
}

PfcResult run_pfc(const FeatureMatrix& features, const SelectionResult& prompt_labels,
                  std::size_t num_classes, KMeansParams params) {
  prompt_labels.validate();
  if (features.sample_ids != prompt_labels.sample_ids)
    throw std::invalid_argument("run_pfc: feature rows and selection refer to different samples");
  if (num_classes == 0) throw std::invalid_argument("run_pfc: no classes");
  for (auto label : prompt_labels.labels)
    if (label >= num_classes) throw std::invalid_argument("run_pfc: pseudo-label outside target classes");

  const std::size_t n = prompt_labels.selected.size();
  Matrix subset(n, features.dim());
  for (std::size_t j = 0; j < n; ++j) {
    const auto src = features.vectors.row(prompt_labels.selected[j]);
    std::copy(src.begin(), src.end(), subset.row(j).begin());
  }
  // Fewer selected samples than classes: cluster into N' groups; the
  // contingency is still C x C and the mapping a full bijection.
  params.k = std::min(num_classes, n);
  PfcResult out;
  out.clusters = kmeans_pp(l2_normalized(subset), params);
  out.mapping = hungarian_max_agreement(build_contingency(out.clusters.cluster_of, prompt_labels.labels, num_classes));
  out.selection = pfc_filter(prompt_labels, out.clusters, out.mapping);
  return out;
}

}  // namespace vlmcpl
