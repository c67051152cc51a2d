#include "vlmcpl/wsi.hpp"

#include <cmath>
#include <map>

namespace vlmcpl {

SlideBag osp_filter(const SlideBag& bag, std::size_t num_target_classes) {
  if (bag.patch_ids.size() != bag.patch_probs.rows)
    throw std::invalid_argument("osp_filter: patch ids do not match probability rows");
  if (num_target_classes == 0 || num_target_classes > bag.patch_probs.cols)
    throw std::invalid_argument("osp_filter: invalid target class count");
  SlideBag out;
  out.slide_id = bag.slide_id;
  std::vector<float> kept;
  for (std::size_t i = 0; i < bag.patch_ids.size(); ++i) {
    const auto row = bag.patch_probs.row(i);
    if (argmax_index(row) < num_target_classes) {
      out.patch_ids.push_back(bag.patch_ids[i]);
      kept.insert(kept.end(), row.begin(), row.end());
    }
  }
  out.patch_probs = Matrix(out.patch_ids.size(), bag.patch_probs.cols, std::move(kept));
  return out;
}

SlidePseudoLabel mean_pool_slide(const SlideBag& bag, std::size_t num_target_classes) {
  if (bag.patch_probs.rows == 0) throw EmptyBagError(bag.slide_id);
  const std::size_t c = num_target_classes == 0 ? bag.patch_probs.cols : num_target_classes;
  if (c > bag.patch_probs.cols) throw std::invalid_argument("mean_pool_slide: too many target classes");
  SlidePseudoLabel out;
  out.slide_id = bag.slide_id;
  out.probs.assign(c, 0.0);
  for (std::size_t i = 0; i < bag.patch_probs.rows; ++i)
    for (std::size_t k = 0; k < c; ++k) out.probs[k] += bag.patch_probs(i, k);
  for (auto& v : out.probs) v /= static_cast<double>(bag.patch_probs.rows);
  out.label = static_cast<std::uint32_t>(argmax_index(std::span<const double>(out.probs)));
  return out;
}

SlidePooling pool_slides(const DatasetManifest& manifest, const Matrix& probs, std::size_t num_target_classes,
                         std::span<const std::uint32_t> keep) {
  if (!manifest.slide_of) throw std::invalid_argument("pool_slides: manifest has no slide assignment");
  if (probs.rows != manifest.sample_ids.size())
    throw std::invalid_argument("pool_slides: probability rows do not match manifest samples");
  if (!keep.empty() && keep.size() != probs.rows) throw std::invalid_argument("pool_slides: keep mask length");

  const auto slide_order = manifest.slide_ids();
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < manifest.sample_ids.size(); ++i)
    if (keep.empty() || keep[i]) members[manifest.slide_of->at(manifest.sample_ids[i])].push_back(i);

  SlidePooling out;
  for (const auto& slide : slide_order) {
    auto it = members.find(slide);
    if (it == members.end()) {
      out.excluded_slides.push_back(slide);
      continue;
    }
    SlideBag bag;
    bag.slide_id = slide;
    bag.patch_probs = Matrix(it->second.size(), probs.cols);
    for (std::size_t j = 0; j < it->second.size(); ++j) {
      bag.patch_ids.push_back(manifest.sample_ids[it->second[j]]);
      const auto src = probs.row(it->second[j]);
      std::copy(src.begin(), src.end(), bag.patch_probs.row(j).begin());
    }
    out.slides.push_back(mean_pool_slide(bag, num_target_classes));
  }
  return out;
}

SelectionResult osp_select(const std::vector<std::string>& sample_ids, const Matrix& prompt_probs,
                           std::size_t num_target_classes) {
  if (prompt_probs.rows != sample_ids.size()) throw std::invalid_argument("osp_select: row count mismatch");
  if (num_target_classes == 0 || num_target_classes > prompt_probs.cols)
    throw std::invalid_argument("osp_select: invalid target class count");
  SelectionResult out;
  out.stage = StageTag::osp;
  out.sample_ids = sample_ids;
  for (std::uint32_t i = 0; i < prompt_probs.rows; ++i) {
    const auto label = argmax_index(prompt_probs.row(i));
    if (label < num_target_classes) {
      out.selected.push_back(i);
      out.labels.push_back(static_cast<std::uint32_t>(label));
    } else {
      out.rejected.push_back(i);
    }
  }
  return out;
}

MvcScores osp_vote_scores(const MultiViewPredictions& multiview, const SelectionResult& osp,
                          std::size_t num_target_classes) {
  multiview.validate();
  osp.validate();
  if (multiview.sample_ids != osp.sample_ids)
    throw std::invalid_argument("osp_vote_scores: multi-view predictions and OSP selection differ in samples");
  if (num_target_classes == 0 || num_target_classes > multiview.num_classes)
    throw std::invalid_argument("osp_vote_scores: invalid target class count");

  const std::size_t k = multiview.num_views, c_eff = multiview.num_classes, c = num_target_classes;
  MvcScores scores;
  for (std::size_t j = 0; j < osp.selected.size(); ++j) {
    const auto i = osp.selected[j];
    const auto full = vote_entropy(multiview.views_of(i), k, c_eff);
    std::vector<std::uint32_t> counts(c);
    std::uint32_t total = 0;
    for (std::size_t t = 0; t < c; ++t) {
      counts[t] = static_cast<std::uint32_t>(std::lround(full.vote_dist[t] * static_cast<double>(k)));
      total += counts[t];
    }
    std::vector<double> dist(c, 0.0);
    std::uint32_t label = osp.labels[j];
    double entropy = std::log(static_cast<double>(c));
    if (total > 0) {
      for (std::size_t t = 0; t < c; ++t) dist[t] = static_cast<double>(counts[t]) / total;
      entropy = count_entropy(counts, total);
      label = static_cast<std::uint32_t>(argmax_index(std::span<const std::uint32_t>(counts)));
    } else {
      std::fill(dist.begin(), dist.end(), 1.0 / static_cast<double>(c));
    }
    scores.sample_ids.push_back(osp.sample_ids[i]);
    scores.pseudo_label.push_back(label);
    scores.entropy.push_back(entropy);
    scores.vote_dist.push_back(std::move(dist));
  }
  return scores;
}

SlidePipelineResult slide_pipeline(const DatasetManifest& manifest, const MultiViewPredictions& multiview,
                                   const FeatureMatrix& features, const Matrix& prompt_probs,
                                   const WsiConfig& config) {
  manifest.validate();
  if (!manifest.slide_of) throw std::invalid_argument("slide_pipeline: manifest lacks slide_of");
  const std::size_t c = manifest.num_classes();
  const std::size_t c_eff = c + manifest.num_open_set();
  if (multiview.num_classes != c_eff || prompt_probs.cols != c_eff)
    throw std::invalid_argument("slide_pipeline: probabilities must cover C + Q = " + std::to_string(c_eff) +
                                " classes");
  if (features.sample_ids != manifest.sample_ids || multiview.sample_ids != manifest.sample_ids)
    throw std::invalid_argument("slide_pipeline: inputs are not aligned with the manifest");

  SlidePipelineResult out;
  out.osp = osp_select(manifest.sample_ids, prompt_probs, c);
  if (out.osp.selected.empty()) throw std::invalid_argument("slide_pipeline: OSP rejected every patch");

  // MVC on the survivors; the percentage is of the post-OSP count.
  const auto scores = osp_vote_scores(multiview, out.osp, c);
  const auto local = config.class_aware ? select_cmvc(scores, config.select_percent)
                                        : select_mvc(scores, config.select_percent);
  out.mvc.stage = local.stage;
  out.mvc.sample_ids = manifest.sample_ids;
  std::vector<bool> keep(manifest.sample_ids.size(), false);
  std::vector<std::uint32_t> label_of(manifest.sample_ids.size(), 0);
  for (std::size_t j = 0; j < local.selected.size(); ++j) {
    const auto universe = out.osp.selected[local.selected[j]];
    keep[universe] = true;
    label_of[universe] = local.labels[j];
  }
  for (std::uint32_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) {
      out.mvc.selected.push_back(i);
      out.mvc.labels.push_back(label_of[i]);
    } else {
      out.mvc.rejected.push_back(i);
    }
  }

  out.pfc = run_pfc(features, out.mvc, c, config.kmeans);
  out.training = train_hcs(features, out.pfc.selection, c, config.hcs);
  out.patch_probs = predict_pair(out.training.probes.a, out.training.probes.b, features.vectors);
  out.slides = pool_slides(manifest, out.patch_probs, c, out.osp.selected_mask());
  return out;
}

}  // namespace vlmcpl
