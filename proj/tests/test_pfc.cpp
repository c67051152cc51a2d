#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vlmcpl/consensus_pfc.hpp"

using namespace vlmcpl;

namespace {

Matrix blobs(std::size_t n, std::size_t k, double sep, std::uint64_t seed, std::vector<std::uint32_t>& truth) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(n, 2);
  truth.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = static_cast<std::uint32_t>(i % k);
    m(i, 0) = static_cast<float>(g(rng) + sep * std::cos(2.0 * M_PI * truth[i] / k));
    m(i, 1) = static_cast<float>(g(rng) + sep * std::sin(2.0 * M_PI * truth[i] / k));
  }
  return m;
}

double inertia_of(const Matrix& pts, const std::vector<std::uint32_t>& assign, std::size_t k) {
  std::vector<std::vector<double>> mean(k, std::vector<double>(pts.cols, 0.0));
  std::vector<double> count(k, 0.0);
  for (std::size_t i = 0; i < pts.rows; ++i) {
    count[assign[i]] += 1;
    for (std::size_t j = 0; j < pts.cols; ++j) mean[assign[i]][j] += pts(i, j);
  }
  double total = 0;
  for (std::size_t i = 0; i < pts.rows; ++i)
    for (std::size_t j = 0; j < pts.cols; ++j) {
      const double d = pts(i, j) - mean[assign[i]][j] / count[assign[i]];
      total += d * d;
    }
  return total;
}

SelectionResult prompt_selection(std::vector<std::uint32_t> selected, std::vector<std::uint32_t> labels,
                                 std::size_t n) {
  SelectionResult s;
  s.stage = StageTag::mvc;
  for (std::size_t i = 0; i < n; ++i) s.sample_ids.push_back("s" + std::to_string(i));
  std::vector<bool> in(n, false);
  for (auto i : selected) in[i] = true;
  for (std::uint32_t i = 0; i < n; ++i)
    if (!in[i]) s.rejected.push_back(i);
  s.selected = std::move(selected);
  s.labels = std::move(labels);
  return s;
}

}  // namespace

TEST(KMeans, EachPointItsOwnCluster) {
  std::vector<std::uint32_t> truth;
  const auto pts = blobs(6, 3, 5.0, 1, truth);
  KMeansParams p;
  p.k = 6;
  const auto r = kmeans_pp(pts, p);
  EXPECT_EQ(r.inertia, 0.0);
  EXPECT_EQ(std::set<std::uint32_t>(r.cluster_of.begin(), r.cluster_of.end()).size(), 6u);
}

TEST(KMeans, SingleClusterIsMean) {
  std::vector<std::uint32_t> truth;
  const auto pts = blobs(50, 2, 3.0, 2, truth);
  KMeansParams p;
  p.k = 1;
  const auto r = kmeans_pp(pts, p);
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < 50; ++i) mean += pts(i, j);
    EXPECT_NEAR(r.centroids(0, j), mean / 50, 1e-5);
  }
}

TEST(KMeans, TwoBlobsMatchExhaustiveOptimum) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<std::uint32_t> truth;
    const auto pts = blobs(14, 2, 10.0, seed, truth);
    double best = 1e300;
    for (std::uint32_t mask = 1; mask + 1 < (1u << 14); ++mask) {
      std::vector<std::uint32_t> a(14);
      for (std::size_t i = 0; i < 14; ++i) a[i] = (mask >> i) & 1u;
      best = std::min(best, inertia_of(pts, a, 2));
    }
    KMeansParams p;
    p.seed = seed;
    const auto r = kmeans_pp(pts, p);
    EXPECT_NEAR(inertia_of(pts, r.cluster_of, 2), best, 1e-6 * best);
    const auto m = hungarian_max_agreement(build_contingency(r.cluster_of, truth, 2));
    EXPECT_EQ(m.agreement, 14u);
  }
}

TEST(KMeans, LargerBlobsRecovered) {
  std::vector<std::uint32_t> truth;
  const auto pts = blobs(600, 4, 12.0, 3, truth);
  KMeansParams p;
  p.k = 4;
  const auto r = kmeans_pp(pts, p);
  EXPECT_EQ(hungarian_max_agreement(build_contingency(r.cluster_of, truth, 4)).agreement, 600u);
}

TEST(KMeans, Deterministic) {
  std::vector<std::uint32_t> truth;
  const auto pts = blobs(200, 3, 2.0, 4, truth);
  KMeansParams p;
  p.k = 3;
  p.seed = 42;
  const auto a = kmeans_pp(pts, p), b = kmeans_pp(pts, p);
  EXPECT_EQ(a.cluster_of, b.cluster_of);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(KMeans, DuplicatePointsKeepEveryClusterNonEmpty) {
  Matrix pts(5, 1, std::vector<float>{1, 1, 1, 1, 2});
  KMeansParams p;
  p.k = 3;
  const auto r = kmeans_pp(pts, p);
  std::vector<int> size(3, 0);
  for (auto c : r.cluster_of) ++size.at(c);
  for (int s : size) EXPECT_GT(s, 0);
}

TEST(KMeans, Errors) {
  Matrix pts(3, 2, 1.0f);
  KMeansParams p;
  p.k = 0;
  EXPECT_THROW(kmeans_pp(pts, p), std::invalid_argument);
  p.k = 4;
  EXPECT_THROW(kmeans_pp(pts, p), std::invalid_argument);
}

TEST(L2Normalize, UnitRows) {
  Matrix m(2, 2, std::vector<float>{3, 4, 0, 0});
  const auto n = l2_normalized(m);
  EXPECT_FLOAT_EQ(n(0, 0), 0.6f);
  EXPECT_FLOAT_EQ(n(0, 1), 0.8f);
  EXPECT_EQ(n(1, 0), 0.0f);
}

TEST(Hungarian, Examples) {
  const auto one = hungarian_max_agreement({{7}});
  EXPECT_EQ(one.perm, (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(one.agreement, 7u);
  const auto two = hungarian_max_agreement({{5, 1}, {0, 4}});
  EXPECT_EQ(two.perm, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(two.agreement, 9u);
  const auto swapped = hungarian_max_agreement({{0, 8}, {6, 1}});
  EXPECT_EQ(swapped.perm, (std::vector<std::uint32_t>{1, 0}));
}

TEST(Hungarian, TiesResolveToLexicographicallySmallest) {
  EXPECT_EQ(hungarian_max_agreement({{1, 1}, {1, 1}}).perm, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(hungarian_max_agreement({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}).perm, (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(hungarian_max_agreement({{2, 2, 0}, {2, 0, 2}, {0, 2, 2}}).perm, (std::vector<std::uint32_t>{0, 2, 1}));
}

TEST(Hungarian, MatchesBruteForce) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 200; ++t) {
    const std::size_t c = 1 + rng() % 6;
    Contingency m(c, std::vector<std::int64_t>(c));
    for (auto& r : m)
      for (auto& v : r) v = static_cast<std::int64_t>(rng() % 20);
    EXPECT_EQ(static_cast<std::int64_t>(hungarian_max_agreement(m).agreement), oracle::brute_force_agreement(m));
  }
}

TEST(Hungarian, Errors) {
  EXPECT_THROW(hungarian_max_agreement({{1, 2}}), std::invalid_argument);
  EXPECT_THROW(hungarian_max_agreement({{1, -2}, {0, 0}}), std::invalid_argument);
  EXPECT_THROW(hungarian_max_agreement({}), std::invalid_argument);
}

TEST(Contingency, Tally) {
  const auto m = build_contingency({0, 0, 1, 1, 1}, {1, 1, 0, 1, 0}, 2);
  EXPECT_EQ(m, (Contingency{{0, 2}, {2, 1}}));
  EXPECT_THROW(build_contingency({0}, {0, 1}, 2), std::invalid_argument);
  EXPECT_THROW(build_contingency({2}, {0}, 2), std::invalid_argument);
}

TEST(PfcFilter, IdentityKeepsAgreeingSamples) {
  const auto prompt = prompt_selection({0, 2, 3}, {0, 1, 1}, 5);
  ClusterAssignment clusters{{0, 1, 1}, Matrix(2, 1), 0.0};
  const auto kept = pfc_filter(prompt, clusters, ClassMapping{{0, 1}, 3});
  EXPECT_EQ(kept.selected, (std::vector<std::uint32_t>{0, 2, 3}));
  EXPECT_EQ(kept.stage, StageTag::pfc);

  ClusterAssignment moved{{0, 0, 1}, Matrix(2, 1), 0.0};
  const auto one_out = pfc_filter(prompt, moved, ClassMapping{{0, 1}, 2});
  EXPECT_EQ(one_out.selected, (std::vector<std::uint32_t>{0, 3}));
  EXPECT_EQ(one_out.labels, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(one_out.rejected, (std::vector<std::uint32_t>{1, 2, 4}));
}

TEST(PfcFilter, SampleSetMismatch) {
  const auto prompt = prompt_selection({0, 2}, {0, 1}, 3);
  ClusterAssignment clusters{{0, 1, 1}, Matrix(2, 1), 0.0};
  EXPECT_THROW(pfc_filter(prompt, clusters, ClassMapping{{0, 1}, 0}), std::invalid_argument);
}

TEST(RunPfc, FewerSelectedThanClasses) {
  FeatureMatrix f{Matrix(4, 2, std::vector<float>{1, 0, 0, 1, 1, 1, -1, 0}), {"s0", "s1", "s2", "s3"}};
  const auto prompt = prompt_selection({1, 3}, {2, 0}, 4);
  KMeansParams p;
  const auto r = run_pfc(f, prompt, 3, p);
  r.selection.validate();
  for (auto i : r.selection.selected) EXPECT_TRUE(i == 1 || i == 3);
}

TEST(RunPfc, CleansNoisyPrompts) {
  std::vector<std::uint32_t> truth;
  const auto pts = blobs(300, 3, 10.0, 11, truth);
  FeatureMatrix f{pts, {}};
  for (std::size_t i = 0; i < 300; ++i) f.sample_ids.push_back("s" + std::to_string(i));
  std::vector<std::uint32_t> sel, labels;
  for (std::uint32_t i = 0; i < 300; ++i) {
    sel.push_back(i);
    labels.push_back(i % 10 == 0 ? (truth[i] + 1) % 3 : truth[i]);
  }
  const auto r = run_pfc(f, prompt_selection(sel, labels, 300), 3, KMeansParams{});
  EXPECT_EQ(r.selection.selected.size(), 270u);
  for (std::size_t p = 0; p < r.selection.selected.size(); ++p)
    EXPECT_EQ(r.selection.labels[p], truth[r.selection.selected[p]]);
}
