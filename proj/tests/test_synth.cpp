#include <gtest/gtest.h>

#include "vlmcpl/consensus_mvc.hpp"
#include "vlmcpl/synth.hpp"
#include "vlmcpl/zeroshot.hpp"

using namespace vlmcpl;

namespace {

double zero_shot_accuracy(const SynthDataset& d) {
  const auto p = zero_shot_probs(d.features, d.class_embeddings);
  std::size_t right = 0;
  for (std::size_t i = 0; i < p.rows; ++i) right += argmax_label(p.row(i)) == d.truth[i];
  return static_cast<double>(right) / p.rows;
}

}  // namespace

TEST(Synth, ShapesAndIds) {
  SynthSpec s;
  s.samples_per_class = 10;
  const auto d = synth_generate(s);
  EXPECT_EQ(d.features.size(), 20u);
  EXPECT_EQ(d.features.dim(), 18u);
  EXPECT_EQ(d.multiview.num_views, 20u);
  EXPECT_EQ(d.class_embeddings.vectors.rows, 2u);
  EXPECT_EQ(d.manifest.sample_ids.front(), "s000000");
  d.multiview.validate();
  d.manifest.validate();
}

TEST(Synth, ZeroNoiseMeansPerfectZeroShot) {
  SynthSpec s;
  s.prompt_noise = 0.0;
  s.samples_per_class = 100;
  EXPECT_EQ(zero_shot_accuracy(synth_generate(s)), 1.0);
}

TEST(Synth, PromptNoiseRateIsRespected) {
  SynthSpec s;
  s.prompt_noise = 0.3;
  const double acc = zero_shot_accuracy(synth_generate(s));
  EXPECT_NEAR(acc, 0.7, 0.04);
}

TEST(Synth, ZeroFlipMeansUnanimousViews) {
  SynthSpec s;
  s.view_flip = 0.0;
  s.samples_per_class = 50;
  const auto scores = score_views(synth_generate(s).multiview);
  for (double e : scores.entropy) EXPECT_EQ(e, 0.0);
}

TEST(Synth, Deterministic) {
  SynthSpec s;
  s.samples_per_class = 30;
  s.seed = 7;
  const auto a = synth_generate(s), b = synth_generate(s);
  EXPECT_EQ(a.features.vectors, b.features.vectors);
  EXPECT_EQ(a.multiview.probs, b.multiview.probs);
  s.seed = 8;
  EXPECT_NE(synth_generate(s).features.vectors, a.features.vectors);
}

TEST(Synth, SlideMode) {
  SynthSpec s;
  s.num_classes = 3;
  s.open_set_classes = 2;
  s.slides = 4;
  s.patches_per_slide = 25;
  const auto d = synth_generate(s);
  EXPECT_EQ(d.features.size(), 100u);
  EXPECT_EQ(d.slide_truth, (std::vector<std::uint32_t>{0, 1, 2, 0}));
  EXPECT_EQ(d.manifest.slide_ids().size(), 4u);
  EXPECT_EQ(d.manifest.num_open_set(), 2u);
  EXPECT_EQ(d.multiview.num_classes, 5u);
  EXPECT_EQ(d.manifest.slide_of->at("slide_000001_p000003"), "slide_000001");
  std::size_t open = 0;
  for (auto t : d.truth) open += t >= 3;
  EXPECT_GT(open, 0u);
}

TEST(Synth, InvalidSpecs) {
  SynthSpec s;
  s.num_classes = 0;
  EXPECT_THROW(synth_generate(s), std::invalid_argument);
  s = SynthSpec{};
  s.prompt_noise = 1.5;
  EXPECT_THROW(synth_generate(s), std::invalid_argument);
  s = SynthSpec{};
  s.open_set_classes = 1;
  EXPECT_THROW(synth_generate(s), std::invalid_argument);
  s = SynthSpec{};
  s.dim = 1;
  EXPECT_THROW(synth_generate(s), std::invalid_argument);
}

TEST(Synth, JsonRoundTrip) {
  SynthSpec s;
  s.num_classes = 4;
  s.separation = 9.5;
  s.slides = 3;
  const auto back = synth_spec_from_json(nlohmann::json::parse(to_json(s).dump()));
  EXPECT_EQ(to_json(back), to_json(s));
}
