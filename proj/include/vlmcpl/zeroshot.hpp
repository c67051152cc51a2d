#pragma once

// Prompt-based zero-shot class probabilities from image features and class text embeddings.

#include <cstdint>
#include <span>
#include <vector>

#include "vlmcpl/matrix.hpp"

namespace vlmcpl {

inline constexpr float kDefaultTemperature = 4.5871f;

enum class TemperatureMode {
  divide,     // logit = sim / tau
  exp_scale,  // logit = sim * exp(tau), the CLIP logit-scale reading
};

// Rows 0..C-1 are target classes, rows C..C+Q-1 are open-set classes.
struct ClassEmbeddings {
  Matrix vectors;
  float temperature = kDefaultTemperature;
  TemperatureMode temperature_mode = TemperatureMode::divide;

  void validate() const;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Softmax over cosine-similarity logits, one row per sample. Output is [N x C_total].
Matrix zero_shot_probs(const FeatureMatrix& features, const ClassEmbeddings& classes);

// Element-wise arithmetic mean of equally shaped probability matrices.
Matrix ensemble_probs(std::span<const Matrix> prob_matrices);

std::uint32_t argmax_label(std::span<const float> prob_row);

// Numerically stable softmax in double precision.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace vlmcpl
