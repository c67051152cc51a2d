#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vlmcpl/pipeline.hpp"

namespace {

int report_error(const std::string& stage, int code, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json err{{"error", kind}, {"stage", stage}, {"message", message}, {"exit_code", code}};
  std::cerr << err.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VLM-CPL: consensus pseudo-labels from vision-language model outputs"};
  app.require_subcommand(1);

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  bool print_config = false;

  const std::vector<std::string> stages{"zeroshot", "mvc", "pfc", "hcs", "wsi", "eval", "synth", "pipeline"};
  for (const auto& name : stages) {
    auto* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "seed for synth, k-means and training");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--stage-overrides", overrides, "KEY=VALUE overrides on the config, dotted keys")
        ->allow_extra_args(true);
    sub->add_flag("--print-config", print_config, "print the merged config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : vlmcpl::kExitConfigError;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    std::optional<std::filesystem::path> cfg_path;
    if (!config_file.empty()) cfg_path = config_file;
    std::optional<std::filesystem::path> out;
    if (!out_dir.empty()) out = out_dir;
    const auto config = vlmcpl::load_config(cfg_path, overrides, seed, out);
    if (print_config) {
      std::cout << config.raw.dump(2) << '\n';
      return vlmcpl::kExitOk;
    }
    vlmcpl::run_stage(vlmcpl::parse_stage(name), config);
  } catch (const vlmcpl::StageError& e) {
    return report_error(name, e.code(), e.kind(), e.what());
  } catch (const std::exception& e) {
    return report_error(name, vlmcpl::kExitStageFailure, "stage_failure", e.what());
  }
  return vlmcpl::kExitOk;
}
