#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlmcpl {

// Dense row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<float> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw std::invalid_argument("matrix payload does not match shape");
  }

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  float& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  float operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Features of N samples, one row per sample id.
struct FeatureMatrix {
  Matrix vectors;
  std::vector<std::string> sample_ids;

  std::size_t size() const noexcept { return vectors.rows; }
  std::size_t dim() const noexcept { return vectors.cols; }

  // Row count matches ids, entries finite, no zero-norm rows.
  void validate() const;
};

// Index of the largest entry; ties go to the lowest index.
template <typename T>
std::size_t argmax_index(std::span<const T> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace vlmcpl
