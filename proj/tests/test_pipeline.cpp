#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "vlmcpl/pipeline.hpp"
#include "vlmcpl/tensor_store.hpp"

using namespace vlmcpl;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("vlmcpl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = std::string(VLMCPL_CLI_PATH) + " " + args + " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string out(const std::string& sub = "out") const { return (dir_ / sub).string(); }

  std::string stderr_text() const {
    std::ifstream in(dir_ / "stderr.txt");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  static nlohmann::json json_file(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

  fs::path dir_;
};

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto cfg = load_config(std::nullopt, {"hcs.epochs=5", "mvc.M=12.5", "zeroshot.temperature_mode=exp_scale"},
                               11, fs::path("somewhere"));
  EXPECT_EQ(cfg.hcs.epochs, 5u);
  EXPECT_EQ(cfg.select_percent, 12.5);
  EXPECT_EQ(cfg.temperature_mode, TemperatureMode::exp_scale);
  EXPECT_EQ(cfg.seed, 11u);
  EXPECT_EQ(cfg.hcs.seed, 11u);
  EXPECT_EQ(cfg.synth.seed, 11u);
  EXPECT_EQ(cfg.paths.manifest, fs::path("somewhere") / "train.manifest.json");
  EXPECT_FLOAT_EQ(cfg.tau, kDefaultTemperature);
  EXPECT_EQ(cfg.hcs.gamma, 0.8);
  EXPECT_EQ(cfg.hcs.weight_decay, 8e-4);
}

TEST(Config, Errors) {
  EXPECT_THROW(load_config(std::nullopt, {"mvc.M=0"}, std::nullopt, std::nullopt), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {"hcs.gamma=1.5"}, std::nullopt, std::nullopt), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {"hcs.epochs=lots"}, std::nullopt, std::nullopt), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {"noequals"}, std::nullopt, std::nullopt), ConfigError);
  EXPECT_THROW(load_config(std::nullopt, {"zeroshot.temperature_mode=cube"}, std::nullopt, std::nullopt), ConfigError);
  EXPECT_THROW(load_config(fs::path("/nonexistent.json"), {}, std::nullopt, std::nullopt), MissingInput);
  EXPECT_THROW(parse_stage("train"), ConfigError);
  EXPECT_EQ(parse_stage("pfc"), Stage::pfc);
}

TEST(Digest, Fnv1a) {
  EXPECT_EQ(content_digest({}), "cbf29ce484222325");
  const std::vector<std::uint8_t> a{'a'};
  EXPECT_EQ(content_digest(a), "af63dc4c8601ec8c");
}

TEST_F(CliTest, SynthIsDeterministic) {
  ASSERT_EQ(run("synth --seed 7 --out " + out("a")), 0);
  ASSERT_EQ(run("synth --seed 7 --out " + out("b")), 0);
  for (const char* f : {"train.cplt", "ground_truth.cplt", "train.manifest.json"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  ASSERT_EQ(run("synth --seed 8 --out " + out("c")), 0);
  EXPECT_NE(slurp(dir_ / "a" / "train.cplt"), slurp(dir_ / "c" / "train.cplt"));
}

TEST_F(CliTest, MissingInputExitCode) {
  EXPECT_EQ(run("mvc --out " + out()), kExitMissingInput);
  const auto err = nlohmann::json::parse(stderr_text());
  EXPECT_EQ(err["error"], "missing_input");
  EXPECT_EQ(err["stage"], "mvc");
}

TEST_F(CliTest, ConfigErrorExitCodes) {
  EXPECT_EQ(run("synth --out " + out() + " --stage-overrides synth.num_classes=0"), kExitConfigError);
  EXPECT_EQ(run("synth --out " + out() + " --stage-overrides mvc.M=101"), kExitConfigError);
  EXPECT_EQ(run("bogus"), kExitConfigError);
  std::ofstream(dir_ / "bad.json") << "{ nope";
  EXPECT_EQ(run("synth --config " + (dir_ / "bad.json").string()), kExitConfigError);
}

TEST_F(CliTest, ViewCountMismatchIsConfigError) {
  ASSERT_EQ(run("synth --out " + out() + " --stage-overrides synth.samples_per_class=20 synth.views=5"), 0);
  EXPECT_EQ(run("mvc --out " + out() + " --stage-overrides mvc.K=20"), kExitConfigError);
  EXPECT_EQ(run("mvc --out " + out() + " --stage-overrides mvc.K=5"), 0);
}

TEST_F(CliTest, CorruptBundleIsStageFailure) {
  ASSERT_EQ(run("synth --out " + out() + " --stage-overrides synth.samples_per_class=20"), 0);
  fs::resize_file(dir_ / "out" / "train.cplt", 100);
  EXPECT_EQ(run("zeroshot --out " + out()), kExitStageFailure);
  EXPECT_NE(stderr_text().find("corrupt_input"), std::string::npos);
}

TEST_F(CliTest, DivergenceIsNumericFailure) {
  ASSERT_EQ(run("synth --out " + out() + " --stage-overrides synth.samples_per_class=40"), 0);
  ASSERT_EQ(run("zeroshot --out " + out()), 0);
  ASSERT_EQ(run("mvc --out " + out()), 0);
  ASSERT_EQ(run("pfc --out " + out()), 0);
  EXPECT_EQ(run("hcs --out " + out() + " --stage-overrides hcs.learning_rate=1e300 hcs.epochs=3"),
            kExitNumericFailure);
  EXPECT_NE(stderr_text().find("epoch"), std::string::npos);
}

TEST_F(CliTest, FullChainBeatsZeroShot) {
  const std::string common = " --seed 3 --out " + out() + " --stage-overrides hcs.learning_rate=0.01 hcs.epochs=40";
  ASSERT_EQ(run("synth" + common), 0);
  for (const char* stage : {"zeroshot", "mvc", "pfc", "hcs", "eval"}) ASSERT_EQ(run(std::string(stage) + common), 0) << stage;
  const auto eval = json_file(dir_ / "out" / "eval.json");
  EXPECT_GE(eval["probes"]["acc"].get<double>(), eval["zero_shot"]["acc"].get<double>());
  EXPECT_EQ(eval["zero_shot"]["n"], 2000);
  EXPECT_GE(eval["pfc"]["acc"].get<double>(), 0.9);

  const auto run_manifest = json_file(dir_ / "out" / "pfc.run.json");
  EXPECT_EQ(run_manifest["stage"], "pfc");
  EXPECT_TRUE(run_manifest["timings"].contains("wall_seconds"));
  EXPECT_EQ(run_manifest["outputs"], nlohmann::json::parse(R"(["pfc.cplt"])"));
  EXPECT_EQ(run_manifest["inputs"].size(), 3u);

  const auto pfc = read_bundle_file(dir_ / "out" / "pfc.cplt");
  const auto& mask = pfc.at("selected_mask").as_u32();
  const auto& labels = pfc.at("pseudo_labels").as_u32();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) EXPECT_EQ(labels[i], 0xFFFFFFFFu);
  const auto probes = read_bundle_file(dir_ / "out" / "probes.cplt");
  EXPECT_EQ(probes.at("probeA_w").shape, (std::vector<std::uint64_t>{2, 18}));
}

TEST_F(CliTest, SlidePipelineWithOpenSet) {
  ASSERT_EQ(run("synth --out " + out() +
                " --stage-overrides synth.num_classes=3 synth.open_set_classes=2 synth.slides=9 synth.dim=10"),
            0);
  ASSERT_EQ(run("pipeline --out " + out() + " --stage-overrides hcs.epochs=20"), 0);
  const auto eval = json_file(dir_ / "out" / "eval.json");
  EXPECT_TRUE(eval.contains("slides"));
  EXPECT_FALSE(eval.contains("zero_shot"));
  const auto wsi = read_bundle_file(dir_ / "out" / "wsi.cplt");
  EXPECT_EQ(wsi.at("slide_probs").shape[1], 3u);
  const auto& osp = wsi.at("osp_mask").as_u32();
  const auto& sel = wsi.at("selected_mask").as_u32();
  for (std::size_t i = 0; i < osp.size(); ++i)
    if (sel[i]) EXPECT_EQ(osp[i], 1u);
}

TEST_F(CliTest, ConfigFileIsMerged) {
  std::ofstream(dir_ / "cfg.json") << R"({"out_dir": ")" << out("from_file")
                                   << R"(", "synth": {"samples_per_class": 5, "num_classes": 3}})";
  ASSERT_EQ(run("synth --config " + (dir_ / "cfg.json").string()), 0);
  const auto truth = read_bundle_file(dir_ / "from_file" / "ground_truth.cplt");
  EXPECT_EQ(truth.at("labels").shape[0], 15u);
}

TEST_F(CliTest, ExtraProbsAreEnsembled) {
  const std::string o = " --out " + out();
  ASSERT_EQ(run("synth" + o + " --stage-overrides synth.samples_per_class=3"), 0);
  TensorBundle extra;
  extra.add(Tensor::f32("probs", {6, 2}, std::vector<float>(12, 0.5f)));
  write_bundle_file(extra, dir_ / "extra.cplt");
  ASSERT_EQ(run("zeroshot" + o), 0);
  const auto single = read_bundle_file(dir_ / "out" / "zeroshot.cplt").at("probs").as_f32();
  ASSERT_EQ(run("zeroshot" + o + " --stage-overrides paths.extra_probs='[\"" + (dir_ / "extra.cplt").string() + "\"]'"),
            0);
  const auto mixed = read_bundle_file(dir_ / "out" / "zeroshot.cplt").at("probs").as_f32();
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(mixed[i], 0.5f * (single[i] + 0.5f), 1e-6);
}
