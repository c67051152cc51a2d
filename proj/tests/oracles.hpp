#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// They are written as plain scalar loops and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double top = logits[0];
  for (double v : logits) top = std::max(top, v);
  std::vector<double> out(logits.size());
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

// p_c = softmax_c(cos(f, g_c) / tau)  or  softmax_c(cos(f, g_c) * e^tau)
inline std::vector<double> zero_shot_row(const std::vector<double>& f, const std::vector<std::vector<double>>& g,
                                         double tau, bool exp_scale) {
  std::vector<double> logits;
  for (const auto& gc : g) {
    double s = std::clamp(cosine(f, gc), -1.0, 1.0);
    logits.push_back(exp_scale ? s * std::exp(tau) : s / tau);
  }
  return softmax(logits);
}

inline double shannon(const std::vector<std::uint32_t>& counts) {
  double total = 0;
  for (auto c : counts) total += c;
  double h = 0;
  for (auto c : counts)
    if (c > 0) h -= (c / total) * std::log(c / total);
  return h;
}

inline std::int64_t brute_force_agreement(const std::vector<std::vector<std::int64_t>>& m) {
  std::vector<std::size_t> perm(m.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best = -1;
  do {
    std::int64_t s = 0;
    for (std::size_t r = 0; r < m.size(); ++r) s += m[r][perm[r]];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct Macro {
  double acc, f1, recall;
};

// F1 written as 2TP / (2TP + FP + FN), which avoids going through precision.
inline Macro macro(const std::vector<std::vector<std::uint32_t>>& cm) {
  const std::size_t c = cm.size();
  double total = 0, diag = 0, f1 = 0, recall = 0;
  for (std::size_t k = 0; k < c; ++k) {
    double tp = cm[k][k], fp = 0, fn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      total += cm[k][j];
      if (j != k) {
        fn += cm[k][j];
        fp += cm[j][k];
      }
    }
    diag += tp;
    if (tp + fn > 0) recall += tp / (tp + fn);
    if (tp > 0) f1 += 2 * tp / (2 * tp + fp + fn);
  }
  return {diag / total, f1 / c, recall / c};
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace oracle
