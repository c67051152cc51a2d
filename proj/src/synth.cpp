#include "vlmcpl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <stdexcept>

namespace vlmcpl {

namespace {

constexpr double kPromptJitter = 0.3;
constexpr double kLookalikeWeight = 0.6;

std::string padded_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06zu", prefix, i);
  return buf;
}

std::uint32_t other_class(std::uint32_t current, std::size_t num_classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(num_classes - 2));
  const auto v = pick(rng);
  return v >= current ? v + 1 : v;
}

struct SampleDraw {
  std::uint32_t truth;
  std::uint32_t prompt;
  bool resembles_class0 = false;
};

class Generator {
 public:
  Generator(const SynthSpec& spec, std::size_t n)
      : spec_(spec),
        c_eff_(spec.num_classes + spec.open_set_classes),
        width_(spec.dim + c_eff_),
        rng_(spec.seed),
        features_(n, width_),
        views_(n * spec.views * c_eff_) {}

  void emit(std::size_t i, const SampleDraw& s) {
    // Blob block, class means on orthogonal axes at pairwise distance `separation`.
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double offset = spec_.separation / std::sqrt(2.0);
    auto row = features_.row(i);
    for (std::size_t j = 0; j < spec_.dim; ++j) row[j] = static_cast<float>(gauss(rng_));
    row[s.truth] += static_cast<float>(offset);

    std::uniform_real_distribution<double> jitter(0.0, kPromptJitter);
    for (std::size_t c = 0; c < c_eff_; ++c) row[spec_.dim + c] = static_cast<float>(jitter(rng_));
    row[spec_.dim + s.prompt] += 1.0f;
    if (s.resembles_class0) row[spec_.dim] += static_cast<float>(kLookalikeWeight);

    const bool noisy = s.prompt != s.truth;
    const double flip = noisy ? spec_.view_flip : spec_.view_flip * spec_.clean_flip_scale;
    std::bernoulli_distribution flips(flip);
    std::normal_distribution<double> logit_noise(0.0, 0.5);
    std::vector<double> logits(c_eff_);
    for (std::size_t k = 0; k < spec_.views; ++k) {
      std::uint32_t vote = s.prompt;
      if (c_eff_ > 1 && flips(rng_)) vote = other_class(s.prompt, c_eff_, rng_);
      double top = -1e300;
      for (std::size_t c = 0; c < c_eff_; ++c) {
        logits[c] = logit_noise(rng_);
        if (c != vote) top = std::max(top, logits[c]);
      }
      logits[vote] = (c_eff_ > 1 ? top : 0.0) + 1.0 + std::abs(gauss(rng_));
      const auto p = softmax(logits);
      float* dst = views_.data() + (i * spec_.views + k) * c_eff_;
      for (std::size_t c = 0; c < c_eff_; ++c) dst[c] = static_cast<float>(p[c]);
    }
  }

  std::mt19937_64& rng() { return rng_; }

  void finish(SynthDataset& out, std::vector<std::string> ids) {
    out.features.vectors = std::move(features_);
    out.features.sample_ids = ids;
    out.class_embeddings.vectors = Matrix(c_eff_, width_);
    for (std::size_t c = 0; c < c_eff_; ++c) out.class_embeddings.vectors(c, spec_.dim + c) = 1.0f;
    out.multiview.num_views = spec_.views;
    out.multiview.num_classes = c_eff_;
    out.multiview.probs = std::move(views_);
    out.multiview.sample_ids = ids;
    out.manifest.sample_ids = std::move(ids);
    for (std::size_t c = 0; c < spec_.num_classes; ++c) out.manifest.class_names.push_back(padded_id("class_", c));
    for (std::size_t q = 0; q < spec_.open_set_classes; ++q)
      out.manifest.open_set_class_names.push_back(padded_id("open_set_", q));
  }

 private:
  const SynthSpec& spec_;
  std::size_t c_eff_;
  std::size_t width_;
  std::mt19937_64 rng_;
  Matrix features_;
  std::vector<float> views_;
};

}  // namespace

void SynthSpec::validate() const {
  if (num_classes < 1) throw std::invalid_argument("synth.num_classes must be >= 1");
  if (dim < num_classes + open_set_classes) throw std::invalid_argument("synth.dim must be >= C + Q");
  if (views < 1) throw std::invalid_argument("synth.views must be >= 1");
  if (!(separation >= 0.0)) throw std::invalid_argument("synth.separation must be >= 0");
  auto rate = [](double r, const char* name) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument(std::string("synth.") + name + " must be in [0, 1]");
  };
  rate(prompt_noise, "prompt_noise");
  rate(view_flip, "view_flip");
  rate(clean_flip_scale, "clean_flip_scale");
  rate(open_set_noise, "open_set_noise");
  if (num_classes < 2 && prompt_noise > 0.0) throw std::invalid_argument("synth: prompt noise needs >= 2 classes");
  if (slides == 0) {
    if (samples_per_class < 1) throw std::invalid_argument("synth.samples_per_class must be >= 1");
    if (open_set_classes != 0) throw std::invalid_argument("synth: open-set classes need slide mode");
  } else if (patches_per_slide < 1) {
    throw std::invalid_argument("synth.patches_per_slide must be >= 1");
  }
}

SynthDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  SynthDataset out;
  const std::size_t c = spec.num_classes;

  if (spec.slides == 0) {
    const std::size_t n = c * spec.samples_per_class;
    Generator gen(spec, n);
    std::bernoulli_distribution noisy(spec.prompt_noise);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      SampleDraw s;
      s.truth = static_cast<std::uint32_t>(i % c);
      s.prompt = s.truth;
      if (c > 1 && noisy(gen.rng())) s.prompt = other_class(s.truth, c, gen.rng());
      gen.emit(i, s);
      ids.push_back(padded_id("s", i));
      out.truth.push_back(s.truth);
      out.prompt_labels.push_back(s.prompt);
    }
    gen.finish(out, std::move(ids));
    return out;
  }

  const std::size_t n = spec.slides * spec.patches_per_slide;
  Generator gen(spec, n);
  auto& rng = gen.rng();
  std::uniform_real_distribution<double> open_share(0.2, 0.6);
  std::uniform_real_distribution<double> slide_noise(0.0, std::min(0.9, 2.0 * spec.prompt_noise));
  std::bernoulli_distribution open_noisy(spec.open_set_noise);
  std::vector<std::string> ids;
  std::map<std::string, std::string> slide_of;
  std::size_t i = 0;
  for (std::size_t s = 0; s < spec.slides; ++s) {
    const auto label = static_cast<std::uint32_t>(s % c);
    const std::string slide = padded_id("slide_", s);
    out.slide_truth.push_back(label);
    const double share = spec.open_set_classes > 0 ? open_share(rng) : 0.0;
    const double noise = c > 1 ? slide_noise(rng) : 0.0;
    const std::uint32_t confuser = c > 1 ? other_class(label, c, rng) : label;
    std::bernoulli_distribution is_open(share), is_noisy(noise);
    for (std::size_t p = 0; p < spec.patches_per_slide; ++p, ++i) {
      SampleDraw d;
      if (spec.open_set_classes > 0 && is_open(rng)) {
        std::uniform_int_distribution<std::uint32_t> q(0, static_cast<std::uint32_t>(spec.open_set_classes - 1));
        d.truth = static_cast<std::uint32_t>(c) + q(rng);
        d.prompt = open_noisy(rng) ? 0u : d.truth;
        d.resembles_class0 = d.prompt != 0u;
      } else {
        d.truth = label;
        d.prompt = is_noisy(rng) ? confuser : label;
      }
      gen.emit(i, d);
      const std::string id = slide + "_p" + padded_id("", p);
      ids.push_back(id);
      slide_of[id] = slide;
      out.truth.push_back(d.truth);
      out.prompt_labels.push_back(d.prompt);
    }
  }
  gen.finish(out, std::move(ids));
  out.manifest.slide_of = std::move(slide_of);
  return out;
}

nlohmann::ordered_json to_json(const SynthSpec& s) {
  return {{"num_classes", s.num_classes},
          {"samples_per_class", s.samples_per_class},
          {"dim", s.dim},
          {"separation", s.separation},
          {"prompt_noise", s.prompt_noise},
          {"views", s.views},
          {"view_flip", s.view_flip},
          {"clean_flip_scale", s.clean_flip_scale},
          {"seed", s.seed},
          {"open_set_classes", s.open_set_classes},
          {"slides", s.slides},
          {"patches_per_slide", s.patches_per_slide},
          {"open_set_noise", s.open_set_noise}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.num_classes = j.value("num_classes", s.num_classes);
  s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
  s.dim = j.value("dim", s.dim);
  s.separation = j.value("separation", s.separation);
  s.prompt_noise = j.value("prompt_noise", s.prompt_noise);
  s.views = j.value("views", s.views);
  s.view_flip = j.value("view_flip", s.view_flip);
  s.clean_flip_scale = j.value("clean_flip_scale", s.clean_flip_scale);
  s.seed = j.value("seed", s.seed);
  s.open_set_classes = j.value("open_set_classes", s.open_set_classes);
  s.slides = j.value("slides", s.slides);
  s.patches_per_slide = j.value("patches_per_slide", s.patches_per_slide);
  s.open_set_noise = j.value("open_set_noise", s.open_set_noise);
  return s;
}

}  // namespace vlmcpl
