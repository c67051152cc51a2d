#include "vlmcpl/zeroshot.hpp"

#include <algorithm>
#include <cmath>

namespace vlmcpl {

void FeatureMatrix::validate() const {
  if (vectors.rows != sample_ids.size())
    throw std::invalid_argument("feature rows (" + std::to_string(vectors.rows) +
                                ") do not match sample ids (" + std::to_string(sample_ids.size()) + ")");
  for (std::size_t i = 0; i < vectors.rows; ++i) {
    double norm = 0.0;
    for (float v : vectors.row(i)) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature in row " + std::to_string(i));
      norm += static_cast<double>(v) * v;
    }
    if (norm == 0.0) throw std::invalid_argument("zero-norm feature row " + std::to_string(i));
  }
}

void ClassEmbeddings::validate() const {
  if (!(temperature > 0.0f) || !std::isfinite(temperature))
    throw std::invalid_argument("temperature must be positive and finite");
  if (vectors.rows == 0) throw std::invalid_argument("no class embeddings");
  for (float v : vectors.data)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite class embedding");
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

Matrix zero_shot_probs(const FeatureMatrix& features, const ClassEmbeddings& classes) {
  classes.validate();
  if (features.dim() != classes.vectors.cols)
    throw std::invalid_argument("zero_shot_probs: feature dim " + std::to_string(features.dim()) +
                                " != class embedding dim " + std::to_string(classes.vectors.cols));
  const std::size_t n = features.size();
  const std::size_t c = classes.vectors.rows;
  const double scale = classes.temperature_mode == TemperatureMode::divide
                           ? 1.0 / classes.temperature
                           : std::exp(static_cast<double>(classes.temperature));
  Matrix probs(n, c);
  std::vector<double> logits(c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double sim = cosine_similarity(features.vectors.row(i), classes.vectors.row(k));
      if (!std::isfinite(sim)) throw std::domain_error("non-finite similarity");
      logits[k] = sim * scale;
    }
    const auto p = softmax(logits);
    std::copy(p.begin(), p.end(), probs.row(i).begin());
  }
  return probs;
}

Matrix ensemble_probs(std::span<const Matrix> prob_matrices) {
  if (prob_matrices.empty()) throw std::invalid_argument("ensemble_probs: empty list");
  const auto& first = prob_matrices.front();
  for (const auto& m : prob_matrices)
    if (m.rows != first.rows || m.cols != first.cols)
      throw std::invalid_argument("ensemble_probs: shape mismatch");
  if (prob_matrices.size() == 1) return first;
  Matrix out(first.rows, first.cols);
  const double inv = 1.0 / static_cast<double>(prob_matrices.size());
  for (std::size_t e = 0; e < first.data.size(); ++e) {
    double sum = 0.0;
    for (const auto& m : prob_matrices) sum += m.data[e];
    out.data[e] = static_cast<float>(sum * inv);
  }
  return out;
}

std::uint32_t argmax_label(std::span<const float> prob_row) {
  return static_cast<std::uint32_t>(argmax_index(prob_row));
}

}  // namespace vlmcpl
