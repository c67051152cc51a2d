#include "vlmcpl/manifest.hpp"

#include <fstream>
#include <set>

namespace vlmcpl {

namespace {

template <typename Range>
void require_unique(const Range& values, const char* what) {
  std::set<std::string> seen;
  for (const auto& v : values)
    if (!seen.insert(v).second) throw ManifestError(std::string("duplicate ") + what + " '" + v + "'");
}

}  // namespace

void DatasetManifest::validate() const {
  require_unique(sample_ids, "sample id");
  require_unique(class_names, "class name");
  require_unique(open_set_class_names, "open-set class name");
  const std::set<std::string> targets(class_names.begin(), class_names.end());
  for (const auto& name : open_set_class_names)
    if (targets.count(name)) throw ManifestError("open-set class '" + name + "' is also a target class");
  if (slide_of) {
    for (const auto& id : sample_ids)
      if (!slide_of->count(id)) throw ManifestError("sample '" + id + "' has no slide");
  }
}

std::vector<std::string> DatasetManifest::slide_ids() const {
  std::vector<std::string> out;
  if (!slide_of) return out;
  std::set<std::string> seen;
  for (const auto& id : sample_ids) {
    const auto& slide = slide_of->at(id);
    if (seen.insert(slide).second) out.push_back(slide);
  }
  return out;
}

nlohmann::ordered_json to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["sample_ids"] = m.sample_ids;
  j["class_names"] = m.class_names;
  j["open_set_class_names"] = m.open_set_class_names;
  if (m.slide_of) {
    // Keyed in sample order so the file diffs cleanly against the sample list.
    nlohmann::ordered_json slides = nlohmann::ordered_json::object();
    for (const auto& id : m.sample_ids) slides[id] = m.slide_of->at(id);
    j["slide_of"] = std::move(slides);
  }
  j["split"] = m.split == Split::train ? "train" : "test";
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("open_set_class_names"))
      m.open_set_class_names = j.at("open_set_class_names").get<std::vector<std::string>>();
    if (j.contains("slide_of"))
      m.slide_of = j.at("slide_of").get<std::map<std::string, std::string>>();
    const auto split = j.value("split", std::string("train"));
    if (split == "train") {
      m.split = Split::train;
    } else if (split == "test") {
      m.split = Split::test;
    } else {
      throw ManifestError("unknown split '" + split + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void write_manifest_file(const DatasetManifest& manifest, const std::filesystem::path& path) {
  manifest.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot open " + path.string() + " for writing");
  out << to_json(manifest).dump(2) << '\n';
}

DatasetManifest read_manifest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace vlmcpl
