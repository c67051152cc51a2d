#pragma once

// Slide-level extension: open-set filtering of irrelevant patches, mean
// pooling of patch probabilities into slide labels, and the full
// OSP -> MVC -> PFC -> HCS slide pipeline.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlmcpl/consensus_mvc.hpp"
#include "vlmcpl/consensus_pfc.hpp"
#include "vlmcpl/hcs_trainer.hpp"
#include "vlmcpl/manifest.hpp"
#include "vlmcpl/matrix.hpp"

namespace vlmcpl {

struct SlideBag {
  std::string slide_id;
  std::vector<std::string> patch_ids;
  Matrix patch_probs;  // [S x C_eff]

  friend bool operator==(const SlideBag&, const SlideBag&) = default;
};

struct SlidePseudoLabel {
  std::string slide_id;
  std::vector<double> probs;  // mean over patches, target classes only
  std::uint32_t label = 0;
};

class EmptyBagError : public std::invalid_argument {
 public:
  explicit EmptyBagError(const std::string& slide)
      : std::invalid_argument("slide '" + slide + "' has no patches to pool"), slide_(slide) {}
  const std::string& slide_id() const noexcept { return slide_; }

 private:
  std::string slide_;
};

// Keeps the patches whose argmax is a target class (< num_target_classes).
SlideBag osp_filter(const SlideBag& bag, std::size_t num_target_classes);

// Mean of the first `num_target_classes` columns over all patches, argmax with
// lowest-index ties. Pass num_target_classes = 0 to use every column.
SlidePseudoLabel mean_pool_slide(const SlideBag& bag, std::size_t num_target_classes = 0);

struct SlidePooling {
  std::vector<SlidePseudoLabel> slides;       // manifest slide order, excluded slides omitted
  std::vector<std::string> excluded_slides;   // slides with no kept patch
};

// Groups rows of `probs` (aligned with manifest.sample_ids) by slide and mean
// pools the rows whose keep flag is nonzero. An empty keep mask keeps all.
SlidePooling pool_slides(const DatasetManifest& manifest, const Matrix& probs, std::size_t num_target_classes,
                         std::span<const std::uint32_t> keep = {});

// OSP on un-augmented prompt probabilities [N x (C+Q)]: selected = patches
// with argmax < C, labelled by that argmax.
SelectionResult osp_select(const std::vector<std::string>& sample_ids, const Matrix& prompt_probs,
                           std::size_t num_target_classes);

// Vote entropy for the OSP survivors with the votes restricted to the target
// classes and renormalized. A survivor with no target vote gets entropy ln C
// and keeps its prompt label. Returned scores cover only the survivors.
MvcScores osp_vote_scores(const MultiViewPredictions& multiview, const SelectionResult& osp,
                          std::size_t num_target_classes);

struct WsiConfig {
  double select_percent = kDefaultSelectPercent;
  bool class_aware = false;
  KMeansParams kmeans;
  HcsConfig hcs;
};

struct SlidePipelineResult {
  SelectionResult osp;
  SelectionResult mvc;   // over all patches; selected subset of osp.selected
  PfcResult pfc;         // pfc.selection is D_l, its rejected set is D_u
  TrainReport training;
  Matrix patch_probs;    // probe-pair predictions for every patch, [N x C]
  SlidePooling slides;   // pooled over OSP-kept patches
};

SlidePipelineResult slide_pipeline(const DatasetManifest& manifest, const MultiViewPredictions& multiview,
                                   const FeatureMatrix& features, const Matrix& prompt_probs,
                                   const WsiConfig& config);

}  // namespace vlmcpl
