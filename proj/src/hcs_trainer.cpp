#include "vlmcpl/hcs_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vlmcpl/zeroshot.hpp"

namespace vlmcpl {

namespace {

enum Stream : std::uint32_t {
  kInitA = 1,
  kInitB = 2,
  kLabeledOrder = 3,
  kUnlabeledOrder = 4,
  kLabeledDropout = 5,
  kUnlabeledDropout = 6,
};

std::mt19937_64 stream_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// Endless shuffled walk over a pool, reshuffled each time it is exhausted.
class Cycler {
 public:
  Cycler(std::vector<std::uint32_t> pool, std::mt19937_64 rng) : pool_(std::move(pool)), rng_(std::move(rng)) {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
  }

  std::uint32_t next() {
    if (pos_ == pool_.size()) {
      std::shuffle(pool_.begin(), pool_.end(), rng_);
      pos_ = 0;
    }
    return pool_[pos_++];
  }

 private:
  std::vector<std::uint32_t> pool_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

std::vector<double> dropout_view(std::span<const float> x, double rate, std::mt19937_64& rng) {
  std::vector<double> out(x.begin(), x.end());
  if (rate <= 0.0) return out;
  std::bernoulli_distribution drop(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : out) v = drop(rng) ? 0.0 : v * keep_scale;
  return out;
}

// Adds weight * d(-ln clip(p[y]))/d(params) into grad. Flat where clipped.
void add_ce_grad(LinearProbe& grad, std::span<const double> probs, std::uint32_t label, std::span<const double> x,
                 double weight) {
  if (probs[label] < kProbClipLow || probs[label] > kProbClipHigh) return;
  for (std::size_t c = 0; c < grad.num_classes; ++c) {
    const double dz = weight * (probs[c] - (c == label ? 1.0 : 0.0));
    double* w = grad.weights.data() + c * grad.dim;
    for (std::size_t j = 0; j < grad.dim; ++j) w[j] += dz * x[j];
    grad.bias[c] += dz;
  }
}

void check_probs(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("probability vector has invalid entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("probability vector does not sum to 1");
}

template <typename T>
std::vector<double> forward_impl(const LinearProbe& probe, std::span<const T> x) {
  if (x.size() != probe.dim)
    throw std::invalid_argument("forward: feature dim " + std::to_string(x.size()) + " != probe dim " +
                                std::to_string(probe.dim));
  std::vector<double> logits(probe.num_classes);
  for (std::size_t c = 0; c < probe.num_classes; ++c) {
    const double* w = probe.weights.data() + c * probe.dim;
    double z = probe.bias[c];
    for (std::size_t j = 0; j < probe.dim; ++j) z += w[j] * static_cast<double>(x[j]);
    logits[c] = z;
  }
  return softmax(logits);
}

void sgd_step(LinearProbe& probe, const LinearProbe& grad, double lr, double weight_decay) {
  for (std::size_t i = 0; i < probe.weights.size(); ++i)
    probe.weights[i] -= lr * (grad.weights[i] + weight_decay * probe.weights[i]);
  for (std::size_t i = 0; i < probe.bias.size(); ++i)
    probe.bias[i] -= lr * (grad.bias[i] + weight_decay * probe.bias[i]);
}

}  // namespace

bool LinearProbe::finite() const noexcept {
  return std::all_of(weights.begin(), weights.end(), [](double v) { return std::isfinite(v); }) &&
         std::all_of(bias.begin(), bias.end(), [](double v) { return std::isfinite(v); });
}

void HcsConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("hcs.gamma must be in (0, 1)");
  if (!(lambda_u >= 0.0)) throw std::invalid_argument("hcs.lambda_u must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("hcs.learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("hcs.weight_decay must be >= 0");
  if (epochs < 1 || batch_labeled < 1 || batch_unlabeled < 1 || lr_decay.every_n_epochs < 1)
    throw std::invalid_argument("hcs counts must be >= 1");
  if (!(lr_decay.factor > 0.0)) throw std::invalid_argument("hcs.lr_decay.factor must be > 0");
  if (!(view_dropout >= 0.0 && view_dropout < 1.0)) throw std::invalid_argument("hcs.view_dropout must be in [0, 1)");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("hcs.init_scale must be >= 0");
}

std::vector<double> forward(const LinearProbe& probe, std::span<const double> feature) {
  return forward_impl(probe, feature);
}

std::vector<double> forward(const LinearProbe& probe, std::span<const float> feature) {
  return forward_impl(probe, feature);
}

double cross_entropy(std::span<const double> probs, std::uint32_t label) {
  if (label >= probs.size()) throw std::invalid_argument("cross_entropy: label out of range");
  return -std::log(std::clamp(probs[label], kProbClipLow, kProbClipHigh));
}

std::pair<double, double> hcs_losses(std::span<const double> prob_a, std::span<const double> prob_b, double gamma) {
  check_probs(prob_a);
  check_probs(prob_b);
  if (prob_a.size() != prob_b.size()) throw std::invalid_argument("hcs_losses: class count mismatch");
  const auto target_b = static_cast<std::uint32_t>(argmax_index(prob_b));
  const auto target_a = static_cast<std::uint32_t>(argmax_index(prob_a));
  const double loss_a = prob_b[target_b] > gamma ? cross_entropy(prob_a, target_b) : 0.0;
  const double loss_b = prob_a[target_a] > gamma ? cross_entropy(prob_b, target_a) : 0.0;
  return {loss_a, loss_b};
}

double pl_loss(std::span<const double> prob_a, std::span<const double> prob_b, std::uint32_t label) {
  if (label >= prob_a.size() || label >= prob_b.size()) throw std::invalid_argument("pl_loss: label out of range");
  return 0.5 * (cross_entropy(prob_a, label) + cross_entropy(prob_b, label));
}

BatchTerms evaluate_batch(const ProbePair& probes, const HcsBatch& batch, double gamma, double lambda_u,
                          PairGradient* grad) {
  BatchTerms terms;
  if (grad) {
    grad->a = LinearProbe(probes.a.num_classes, probes.a.dim);
    grad->b = LinearProbe(probes.b.num_classes, probes.b.dim);
  }

  const std::size_t nl = batch.labels.size();
  if (nl > 0) {
    // d/dparams of mean_i (CE_A + CE_B) / 2
    const double w = 0.5 / static_cast<double>(nl);
    for (std::size_t i = 0; i < nl; ++i) {
      const auto pa = forward(probes.a, std::span<const double>(batch.labeled_a[i]));
      const auto pb = forward(probes.b, std::span<const double>(batch.labeled_b[i]));
      terms.pl_a += cross_entropy(pa, batch.labels[i]);
      terms.pl_b += cross_entropy(pb, batch.labels[i]);
      if (grad) {
        add_ce_grad(grad->a, pa, batch.labels[i], batch.labeled_a[i], w);
        add_ce_grad(grad->b, pb, batch.labels[i], batch.labeled_b[i], w);
      }
    }
    terms.pl_a /= static_cast<double>(nl);
    terms.pl_b /= static_cast<double>(nl);
  }

  const std::size_t nu = batch.unlabeled_a.size();
  if (nu > 0) {
    const double w = lambda_u * 0.5 / static_cast<double>(nu);
    for (std::size_t i = 0; i < nu; ++i) {
      const auto pa = forward(probes.a, std::span<const double>(batch.unlabeled_a[i]));
      const auto pb = forward(probes.b, std::span<const double>(batch.unlabeled_b[i]));
      const auto target_a = static_cast<std::uint32_t>(argmax_index(std::span<const double>(pa)));
      const auto target_b = static_cast<std::uint32_t>(argmax_index(std::span<const double>(pb)));
      terms.gates_total += 2;
      // Closed gates contribute nothing, not even a zero-valued term.
      if (pb[target_b] > gamma) {
        ++terms.gates_open;
        terms.unsup_a += cross_entropy(pa, target_b);
        if (grad && lambda_u != 0.0) add_ce_grad(grad->a, pa, target_b, batch.unlabeled_a[i], w);
      }
      if (pa[target_a] > gamma) {
        ++terms.gates_open;
        terms.unsup_b += cross_entropy(pb, target_a);
        if (grad && lambda_u != 0.0) add_ce_grad(grad->b, pb, target_a, batch.unlabeled_b[i], w);
      }
    }
    terms.unsup_a /= static_cast<double>(nu);
    terms.unsup_b /= static_cast<double>(nu);
  }
  return terms;
}

ProbePair init_probes(std::size_t num_classes, std::size_t dim, const HcsConfig& config) {
  ProbePair pair{LinearProbe(num_classes, dim), LinearProbe(num_classes, dim)};
  auto fill = [&](LinearProbe& probe, Stream stream) {
    if (config.init_scale == 0.0) return;
    auto rng = stream_rng(config.seed, stream);
    std::normal_distribution<double> normal(0.0, config.init_scale);
    for (auto& w : probe.weights) w = normal(rng);
  };
  fill(pair.a, kInitA);
  fill(pair.b, kInitB);
  return pair;
}

TrainReport train_hcs(const FeatureMatrix& features, const SelectionResult& split, std::size_t num_classes,
                      const HcsConfig& config, std::optional<ProbePair> initial) {
  config.validate();
  split.validate();
  if (split.universe_size() != features.size())
    throw std::invalid_argument("train_hcs: split and features cover different sample counts");
  if (split.selected.empty()) throw std::invalid_argument("train_hcs: clean subset D_l is empty");
  if (num_classes == 0) throw std::invalid_argument("train_hcs: no classes");
  for (auto label : split.labels)
    if (label >= num_classes) throw std::invalid_argument("train_hcs: label outside target classes");

  const std::size_t dim = features.dim();
  TrainReport report;
  report.probes = initial ? std::move(*initial) : init_probes(num_classes, dim, config);
  auto& probes = report.probes;
  if (probes.a.num_classes != num_classes || probes.a.dim != dim || probes.b.num_classes != num_classes ||
      probes.b.dim != dim)
    throw std::invalid_argument("train_hcs: initial probes have the wrong shape");

  std::vector<std::uint32_t> labeled_pool(split.selected.size());
  std::iota(labeled_pool.begin(), labeled_pool.end(), 0u);
  Cycler labeled(labeled_pool, stream_rng(config.seed, kLabeledOrder));
  const bool has_unlabeled = !split.rejected.empty();
  std::optional<Cycler> unlabeled;
  if (has_unlabeled) unlabeled.emplace(split.rejected, stream_rng(config.seed, kUnlabeledOrder));
  auto labeled_drop = stream_rng(config.seed, kLabeledDropout);
  auto unlabeled_drop = stream_rng(config.seed, kUnlabeledDropout);

  const std::size_t steps_per_epoch = (split.selected.size() + config.batch_labeled - 1) / config.batch_labeled;
  double lr = config.learning_rate;
  HcsBatch batch;
  PairGradient grad;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch > 0 && epoch % config.lr_decay.every_n_epochs == 0) lr *= config.lr_decay.factor;
    EpochStats stats;
    stats.learning_rate = lr;
    std::size_t gates_open = 0, gates_total = 0;

    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      batch.labeled_a.clear();
      batch.labeled_b.clear();
      batch.labels.clear();
      batch.unlabeled_a.clear();
      batch.unlabeled_b.clear();
      for (std::size_t i = 0; i < config.batch_labeled; ++i) {
        const auto j = labeled.next();
        const auto x = features.vectors.row(split.selected[j]);
        batch.labeled_a.push_back(dropout_view(x, config.view_dropout, labeled_drop));
        batch.labeled_b.push_back(dropout_view(x, config.view_dropout, labeled_drop));
        batch.labels.push_back(split.labels[j]);
      }
      if (has_unlabeled) {
        for (std::size_t i = 0; i < config.batch_unlabeled; ++i) {
          const auto x = features.vectors.row(unlabeled->next());
          batch.unlabeled_a.push_back(dropout_view(x, config.view_dropout, unlabeled_drop));
          batch.unlabeled_b.push_back(dropout_view(x, config.view_dropout, unlabeled_drop));
        }
      }

      const auto terms = evaluate_batch(probes, batch, config.gamma, config.lambda_u, &grad);
      const double total = terms.pl() + config.lambda_u * terms.unsup();
      if (!std::isfinite(total)) throw NumericFailure(epoch, step, "non-finite loss");

      sgd_step(probes.a, grad.a, lr, config.weight_decay);
      sgd_step(probes.b, grad.b, lr, config.weight_decay);
      if (!probes.a.finite() || !probes.b.finite()) throw NumericFailure(epoch, step, "non-finite parameters");

      stats.supervised_loss_a += terms.pl_a;
      stats.supervised_loss_b += terms.pl_b;
      stats.unsupervised_loss_a += terms.unsup_a;
      stats.unsupervised_loss_b += terms.unsup_b;
      gates_open += terms.gates_open;
      gates_total += terms.gates_total;
    }

    const double inv = 1.0 / static_cast<double>(steps_per_epoch);
    stats.supervised_loss_a *= inv;
    stats.supervised_loss_b *= inv;
    stats.unsupervised_loss_a *= inv;
    stats.unsupervised_loss_b *= inv;
    stats.supervised_loss = 0.5 * (stats.supervised_loss_a + stats.supervised_loss_b);
    stats.unsupervised_loss = 0.5 * (stats.unsupervised_loss_a + stats.unsupervised_loss_b);
    stats.gate_open_fraction =
        gates_total == 0 ? 0.0 : static_cast<double>(gates_open) / static_cast<double>(gates_total);
    report.epochs.push_back(stats);
  }
  return report;
}

Matrix predict_pair(const LinearProbe& a, const LinearProbe& b, const Matrix& features) {
  if (a.dim != features.cols || b.dim != features.cols)
    throw std::invalid_argument("predict_pair: feature dim does not match probes");
  if (a.num_classes != b.num_classes) throw std::invalid_argument("predict_pair: probes disagree on class count");
  Matrix out(features.rows, a.num_classes);
  for (std::size_t i = 0; i < features.rows; ++i) {
    const auto pa = forward(a, features.row(i));
    const auto pb = forward(b, features.row(i));
    for (std::size_t c = 0; c < a.num_classes; ++c) out(i, c) = static_cast<float>(0.5 * (pa[c] + pb[c]));
  }
  return out;
}

}  // namespace vlmcpl
