#pragma once

// Synthetic VLM outputs with hidden ground truth, for self-contained runs.
//
// Features have two blocks. The first `dim` coordinates hold Gaussian blobs
// (unit variance, pairwise mean distance `separation`) that follow the true
// class. The last C+Q coordinates carry the prompt signal: a unit spike at
// the prompt label plus uniform [0, 0.3) jitter. Class embeddings are unit
// vectors on that prompt block, so the zero-shot argmax is exactly the prompt
// label, which is wrong with rate `prompt_noise`.
//
// Each of the K views votes for the prompt label, re-flipped to a uniformly
// drawn other class with rate `view_flip` for noisy samples and
// `view_flip * clean_flip_scale` for clean ones.
//
// With slides > 0 the samples are patches grouped into slides. Each slide has
// a target class, a share of open-set patches drawn from [0.2, 0.6], and its
// own prompt-noise rate drawn from [0, 2 * prompt_noise] whose errors all go
// to one confuser class. Open-set patches also resemble target class 0 on the
// prompt block, so closed-set prompting pulls them towards class 0.

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "vlmcpl/consensus_mvc.hpp"
#include "vlmcpl/manifest.hpp"
#include "vlmcpl/matrix.hpp"
#include "vlmcpl/zeroshot.hpp"

namespace vlmcpl {

struct SynthSpec {
  std::size_t num_classes = 2;
  std::size_t samples_per_class = 1000;  // patch mode only
  std::size_t dim = 16;
  double separation = 8.0;  // in units of the blob standard deviation
  double prompt_noise = 0.3;
  std::size_t views = 20;
  double view_flip = 0.3;
  double clean_flip_scale = 0.25;
  std::uint64_t seed = 0;

  std::size_t open_set_classes = 0;
  std::size_t slides = 0;
  std::size_t patches_per_slide = 40;
  double open_set_noise = 0.1;  // open-set patches prompted as target class 0

  void validate() const;  // throws std::invalid_argument
};

struct SynthDataset {
  DatasetManifest manifest;
  FeatureMatrix features;
  ClassEmbeddings class_embeddings;
  MultiViewPredictions multiview;
  std::vector<std::uint32_t> truth;          // per sample; open-set patches are >= C
  std::vector<std::uint32_t> prompt_labels;  // per sample, over C + Q
  std::vector<std::uint32_t> slide_truth;    // per slide, manifest slide order
};

SynthDataset synth_generate(const SynthSpec& spec);

nlohmann::ordered_json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

}  // namespace vlmcpl
