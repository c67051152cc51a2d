#pragma once

// Prompt-feature consensus: cluster the MVC-selected samples in feature space,
// align clusters to classes by maximum-agreement matching, keep samples whose
// prompt label and aligned cluster label agree.

#include <cstdint>
#include <vector>

#include "vlmcpl/consensus_mvc.hpp"
#include "vlmcpl/matrix.hpp"

namespace vlmcpl {

struct KMeansParams {
  std::size_t k = 2;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
  std::size_t max_iter = 300;
  double tol = 1e-6;
};

struct ClusterAssignment {
  std::vector<std::uint32_t> cluster_of;
  Matrix centroids;
  double inertia = 0.0;
};

// k-means++ seeding followed by Lloyd iterations, best of `restarts` by
// inertia. Restart r uses seed + r, so the result is fully determined by the
// inputs. Empty clusters are re-seeded at the point farthest from its centroid.
ClusterAssignment kmeans_pp(const Matrix& points, const KMeansParams& params);

// Rows scaled to unit L2 norm; zero rows are left untouched.
Matrix l2_normalized(const Matrix& points);

struct ClassMapping {
  std::vector<std::uint32_t> perm;  // cluster index -> class index
  std::uint64_t agreement = 0;
};

using Contingency = std::vector<std::vector<std::int64_t>>;

// contingency[o][c] = #{i : cluster_of[i] == o, label[i] == c}, over all C classes.
Contingency build_contingency(const std::vector<std::uint32_t>& cluster_of,
                              const std::vector<std::uint32_t>& labels, std::size_t num_classes);

// Minimum-cost assignment on a square cost matrix; returns row -> column.
std::vector<std::uint32_t> solve_assignment(const std::vector<std::vector<std::int64_t>>& cost);

// Permutation maximizing sum_o contingency[o][perm[o]]. Among optimal
// permutations the lexicographically smallest is returned.
ClassMapping hungarian_max_agreement(const Contingency& contingency);

// Keeps a selected sample iff its prompt label equals mapping.perm[cluster].
// `clusters` must be computed on exactly prompt_labels.selected, in that order.
SelectionResult pfc_filter(const SelectionResult& prompt_labels, const ClusterAssignment& clusters,
                           const ClassMapping& mapping);

struct PfcResult {
  SelectionResult selection;
  ClusterAssignment clusters;
  ClassMapping mapping;
};

// Full stage: gather selected features, L2-normalize, cluster into
// `num_classes` groups, match, filter.
PfcResult run_pfc(const FeatureMatrix& features, const SelectionResult& prompt_labels,
                  std::size_t num_classes, KMeansParams params);

}  // namespace vlmcpl
