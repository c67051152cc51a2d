#pragma once

// Stage orchestration behind the `vlmcpl` command line tool.
//
// Every stage reads its inputs from files, writes its artifacts into the
// output directory, and records a "<stage>.run.json" manifest with the config
// hash, input digests and wall-clock timings.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vlmcpl/consensus_pfc.hpp"
#include "vlmcpl/hcs_trainer.hpp"
#include "vlmcpl/synth.hpp"
#include "vlmcpl/zeroshot.hpp"

namespace vlmcpl {

enum class Stage { zeroshot, mvc, pfc, hcs, wsi, eval, synth, pipeline };

Stage parse_stage(const std::string& name);
const char* to_string(Stage stage);

enum ExitCode : int {
  kExitOk = 0,
  kExitStageFailure = 1,
  kExitConfigError = 2,
  kExitMissingInput = 3,
  kExitNumericFailure = 4,
};

class StageError : public std::runtime_error {
 public:
  StageError(ExitCode code, std::string kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(std::move(kind)) {}
  ExitCode code() const noexcept { return code_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ExitCode code_;
  std::string kind_;
};

struct ConfigError : StageError {
  explicit ConfigError(const std::string& what) : StageError(kExitConfigError, "config_error", what) {}
};

struct MissingInput : StageError {
  explicit MissingInput(const std::string& what) : StageError(kExitMissingInput, "missing_input", what) {}
};

struct PipelinePaths {
  std::filesystem::path features;          // bundle with "features" (and usually the rest)
  std::filesystem::path multiview;         // bundle with "probs_multiview"
  std::filesystem::path class_embeddings;  // bundle with "class_embeddings"
  std::filesystem::path manifest;
  std::filesystem::path ground_truth;      // bundle with "labels" (and "slide_labels")
  std::vector<std::filesystem::path> extra_probs;  // additional "probs" bundles to ensemble
};

struct PipelineConfig {
  nlohmann::json raw;  // merged document the typed fields were read from
  std::filesystem::path out_dir;
  PipelinePaths paths;
  std::uint64_t seed = 0;

  float tau = kDefaultTemperature;
  TemperatureMode temperature_mode = TemperatureMode::divide;

  double select_percent = 30.0;
  std::size_t expected_views = 0;  // 0 disables the check
  bool class_aware = false;

  KMeansParams kmeans;
  HcsConfig hcs;
  SynthSpec synth;
};

nlohmann::json default_config_json();

// Merges, in order: defaults, the config file, command-line overrides
// ("dotted.key=value", value parsed as JSON when possible), then --seed/--out.
PipelineConfig load_config(const std::optional<std::filesystem::path>& config_file,
                           const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed,
                           const std::optional<std::filesystem::path>& out_dir);

PipelineConfig config_from_json(const nlohmann::json& merged);

// FNV-1a 64-bit, printed as 16 hex digits.
std::string content_digest(std::span<const std::uint8_t> bytes);
std::string file_digest(const std::filesystem::path& path);

// Runs one stage (or the full chain for Stage::pipeline). Throws StageError.
void run_stage(Stage stage, const PipelineConfig& config);

}  // namespace vlmcpl
