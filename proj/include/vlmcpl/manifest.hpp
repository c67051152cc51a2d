#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace vlmcpl {

enum class Split { train, test };

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sidecar metadata stored as "<name>.manifest.json" next to the tensor bundles.
struct DatasetManifest {
  std::vector<std::string> sample_ids;
  std::vector<std::string> class_names;
  std::vector<std::string> open_set_class_names;
  std::optional<std::map<std::string, std::string>> slide_of;
  Split split = Split::train;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t num_open_set() const noexcept { return open_set_class_names.size(); }

  void validate() const;  // throws ManifestError

  // Slide ids in order of first appearance in sample_ids.
  std::vector<std::string> slide_ids() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

nlohmann::ordered_json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

void write_manifest_file(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_file(const std::filesystem::path& path);

}  // namespace vlmcpl
