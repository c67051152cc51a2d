#pragma once

// High-confidence cross supervision on frozen features with two linear probes.
//
// Labelled samples (D_l) train both probes with cross-entropy against their
// clean pseudo-labels. On unlabelled samples (D_u) each probe is trained on
// the other probe's argmax, but only where the other probe's confidence
// exceeds gamma. The cross target is a constant: no gradient flows into the
// probe that produced it.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vlmcpl/consensus_mvc.hpp"
#include "vlmcpl/matrix.hpp"

namespace vlmcpl {

inline constexpr double kProbClipLow = 1e-7;
inline constexpr double kProbClipHigh = 1.0 - 1e-7;

struct LinearProbe {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // [C x d], row-major
  std::vector<double> bias;     // [C]

  LinearProbe() = default;
  LinearProbe(std::size_t classes, std::size_t d)
      : num_classes(classes), dim(d), weights(classes * d, 0.0), bias(classes, 0.0) {}

  bool finite() const noexcept;
  friend bool operator==(const LinearProbe&, const LinearProbe&) = default;
};

struct ProbePair {
  LinearProbe a;
  LinearProbe b;
  friend bool operator==(const ProbePair&, const ProbePair&) = default;
};

struct LrDecay {
  double factor = 0.1;
  std::size_t every_n_epochs = 100;
};

struct HcsConfig {
  double gamma = 0.8;
  double lambda_u = 1.0;
  double learning_rate = 1e-4;
  double weight_decay = 8e-4;
  std::size_t epochs = 200;
  std::size_t batch_labeled = 64;
  std::size_t batch_unlabeled = 64;
  std::uint64_t seed = 0;
  LrDecay lr_decay;
  double view_dropout = 0.1;  // input-feature dropout that makes the two views differ
  double init_scale = 0.01;   // std-dev of the initial weights

  void validate() const;  // throws std::invalid_argument
};

struct EpochStats {
  double supervised_loss_a = 0.0;
  double supervised_loss_b = 0.0;
  double unsupervised_loss_a = 0.0;
  double unsupervised_loss_b = 0.0;
  double supervised_loss = 0.0;    // L_pl
  double unsupervised_loss = 0.0;  // L_unsup
  double gate_open_fraction = 0.0;
  double learning_rate = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  ProbePair probes;
};

class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(std::size_t epoch, std::size_t step, const std::string& what)
      : std::runtime_error(what + " at epoch " + std::to_string(epoch) + ", step " + std::to_string(step)),
        epoch_(epoch),
        step_(step) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

std::vector<double> forward(const LinearProbe& probe, std::span<const double> feature);
std::vector<double> forward(const LinearProbe& probe, std::span<const float> feature);

// -ln(clip(p[label])) with clip to [1e-7, 1 - 1e-7].
double cross_entropy(std::span<const double> probs, std::uint32_t label);

// (lossA, lossB): each probe's cross-entropy against the other's argmax,
// zeroed unless the other's max probability is strictly above gamma.
std::pair<double, double> hcs_losses(std::span<const double> prob_a, std::span<const double> prob_b, double gamma);

double pl_loss(std::span<const double> prob_a, std::span<const double> prob_b, std::uint32_t label);

// One minibatch with the two input views already materialised.
struct HcsBatch {
  std::vector<std::vector<double>> labeled_a, labeled_b;
  std::vector<std::uint32_t> labels;
  std::vector<std::vector<double>> unlabeled_a, unlabeled_b;
};

struct BatchTerms {
  double pl_a = 0.0, pl_b = 0.0;          // batch-mean CE of each probe on D_l
  double unsup_a = 0.0, unsup_b = 0.0;    // batch-mean gated cross CE on D_u
  std::size_t gates_open = 0;
  std::size_t gates_total = 0;

  double pl() const noexcept { return 0.5 * (pl_a + pl_b); }
  double unsup() const noexcept { return 0.5 * (unsup_a + unsup_b); }
};

struct PairGradient {
  LinearProbe a;
  LinearProbe b;
};

// Evaluates L = L_pl + lambda * L_unsup on a batch. When `grad` is non-null it
// receives dL/dparams for both probes (weight decay not included).
BatchTerms evaluate_batch(const ProbePair& probes, const HcsBatch& batch, double gamma, double lambda_u,
                          PairGradient* grad);

ProbePair init_probes(std::size_t num_classes, std::size_t dim, const HcsConfig& config);

// `split` is the PFC selection: selected samples form D_l, rejected form D_u.
TrainReport train_hcs(const FeatureMatrix& features, const SelectionResult& split, std::size_t num_classes,
                      const HcsConfig& config, std::optional<ProbePair> initial = std::nullopt);

// Mean of the two probes' probability outputs, [N x C].
Matrix predict_pair(const LinearProbe& a, const LinearProbe& b, const Matrix& features);

}  // namespace vlmcpl
