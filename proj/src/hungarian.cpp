#include <algorithm>
#include <limits>
#include <stdexcept>

#include "vlmcpl/consensus_pfc.hpp"

namespace vlmcpl {

// Shortest augmenting path with row/column potentials, O(n^3).
std::vector<std::uint32_t> solve_assignment(const std::vector<std::vector<std::int64_t>>& cost) {
  const std::size_t n = cost.size();
  for (const auto& row : cost)
    if (row.size() != n) throw std::invalid_argument("assignment cost matrix must be square");
  if (n == 0) return {};

  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  // 1-based with a virtual column 0, as in the classic formulation.
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<std::int64_t> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      std::int64_t delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::uint32_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = static_cast<std::uint32_t>(j - 1);
  return row_to_col;
}

namespace {

// Best achievable agreement over the rows/columns not yet fixed.
std::int64_t best_remaining(const Contingency& m, const std::vector<bool>& row_used,
                            const std::vector<bool>& col_used, std::int64_t top) {
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!row_used[i]) rows.push_back(i);
    if (!col_used[i]) cols.push_back(i);
  }
  std::vector<std::vector<std::int64_t>> cost(rows.size(), std::vector<std::int64_t>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) cost[a][b] = top - m[rows[a]][cols[b]];
  const auto assign = solve_assignment(cost);
  std::int64_t total = 0;
  for (std::size_t a = 0; a < rows.size(); ++a) total += m[rows[a]][cols[assign[a]]];
  return total;
}

}  // namespace

ClassMapping hungarian_max_agreement(const Contingency& contingency) {
  const std::size_t n = contingency.size();
  if (n == 0) throw std::invalid_argument("hungarian_max_agreement: empty matrix");
  std::int64_t top = 0;
  for (const auto& row : contingency) {
    if (row.size() != n) throw std::invalid_argument("hungarian_max_agreement: matrix must be square");
    for (auto v : row) {
      if (v < 0) throw std::invalid_argument("hungarian_max_agreement: negative count");
      top = std::max(top, v);
    }
  }

  std::vector<bool> row_used(n, false), col_used(n, false);
  const std::int64_t optimum = best_remaining(contingency, row_used, col_used, top);

  // Fix rows in order, each to the smallest column that still admits the optimum.
  ClassMapping out;
  out.perm.assign(n, 0);
  std::int64_t fixed = 0;
  for (std::size_t o = 0; o < n; ++o) {
    row_used[o] = true;
    bool placed = false;
    for (std::size_t c = 0; c < n && !placed; ++c) {
      if (col_used[c]) continue;
      col_used[c] = true;
      const std::int64_t rest = o + 1 < n ? best_remaining(contingency, row_used, col_used, top) : 0;
      if (fixed + contingency[o][c] + rest == optimum) {
        out.perm[o] = static_cast<std::uint32_t>(c);
        fixed += contingency[o][c];
        placed = true;
      } else {
        col_used[c] = false;
      }
    }
    if (!placed) throw std::logic_error("hungarian_max_agreement: no optimal completion found");
  }
  out.agreement = static_cast<std::uint64_t>(fixed);
  return out;
}

Contingency build_contingency(const std::vector<std::uint32_t>& cluster_of,
                              const std::vector<std::uint32_t>& labels, std::size_t num_classes) {
  if (cluster_of.size() != labels.size())
    throw std::invalid_argument("build_contingency: cluster and label counts differ");
  Contingency m(num_classes, std::vector<std::int64_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (cluster_of[i] >= num_classes || labels[i] >= num_classes)
      throw std::invalid_argument("build_contingency: index out of range");
    ++m[cluster_of[i]][labels[i]];
  }
  return m;
}

}  // namespace vlmcpl
