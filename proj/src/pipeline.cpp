#include "vlmcpl/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "vlmcpl/consensus_mvc.hpp"
#include "vlmcpl/manifest.hpp"
#include "vlmcpl/metrics.hpp"
#include "vlmcpl/tensor_store.hpp"
#include "vlmcpl/wsi.hpp"

namespace vlmcpl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::uint32_t kNoLabel = std::numeric_limits<std::uint32_t>::max();

const char* kTrainBundle = "train.cplt";
const char* kTrainManifest = "train.manifest.json";
const char* kGroundTruth = "ground_truth.cplt";
const char* kZeroshotBundle = "zeroshot.cplt";
const char* kMvcBundle = "mvc.cplt";
const char* kPfcBundle = "pfc.cplt";
const char* kProbesBundle = "probes.cplt";
const char* kHcsReport = "hcs_report.json";
const char* kWsiBundle = "wsi.cplt";
const char* kWsiReport = "wsi_report.json";
const char* kEvalReport = "eval.json";

// Tracks inputs, outputs and timing of one stage and writes its run manifest.
class StageRun {
 public:
  StageRun(Stage stage, const PipelineConfig& config)
      : stage_(stage), config_(config), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(config.out_dir);
  }

  const fs::path& input(const fs::path& path) {
    if (!fs::exists(path)) throw MissingInput(std::string(to_string(stage_)) + " needs " + path.string());
    inputs_[path.string()] = file_digest(path);
    return path;
  }

  TensorBundle bundle(const fs::path& path) {
    input(path);
    try {
      return read_bundle_file(path);
    } catch (const BundleError& e) {
      throw StageError(kExitStageFailure, "corrupt_input", path.string() + ": " + e.what());
    }
  }

  DatasetManifest manifest(const fs::path& path) {
    input(path);
    try {
      return read_manifest_file(path);
    } catch (const ManifestError& e) {
      throw StageError(kExitStageFailure, "corrupt_input", path.string() + ": " + e.what());
    }
  }

  fs::path output(const char* name) {
    outputs_.push_back(name);
    return config_.out_dir / name;
  }

  void finish() {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    ordered_json j;
    j["stage"] = to_string(stage_);
    j["config_hash"] = content_digest(as_bytes(config_.raw.dump()));
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["timings"] = {{"wall_seconds", seconds}};
    std::ofstream out(config_.out_dir / (std::string(to_string(stage_)) + ".run.json"), std::ios::trunc);
    out << j.dump(2) << '\n';
  }

  static std::vector<std::uint8_t> as_bytes(const std::string& s) { return {s.begin(), s.end()}; }

 private:
  Stage stage_;
  const PipelineConfig& config_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

const Tensor& entry(const TensorBundle& bundle, const std::string& name, const fs::path& from) {
  if (!bundle.contains(name)) throw MissingInput("entry '" + name + "' not found in " + from.string());
  return bundle.at(name);
}

Matrix matrix_entry(const TensorBundle& bundle, const std::string& name, const fs::path& from) {
  const auto& t = entry(bundle, name, from);
  if (t.shape.size() != 2) throw StageError(kExitStageFailure, "corrupt_input", "'" + name + "' must be 2-D");
  return Matrix(t.shape[0], t.shape[1], t.as_f32());
}

const std::vector<std::uint32_t>& u32_entry(const TensorBundle& bundle, const std::string& name, const fs::path& from,
                                            std::size_t expected) {
  const auto& v = entry(bundle, name, from).as_u32();
  if (v.size() != expected)
    throw StageError(kExitStageFailure, "corrupt_input",
                     "'" + name + "' has " + std::to_string(v.size()) + " values, expected " + std::to_string(expected));
  return v;
}

Tensor matrix_tensor(const std::string& name, const Matrix& m) {
  return Tensor::f32(name, {m.rows, m.cols}, m.data);
}

Tensor vector_tensor(const std::string& name, std::vector<std::uint32_t> v) {
  const std::uint64_t n = v.size();
  return Tensor::u32(name, {n}, std::move(v));
}

Tensor probe_tensor(const std::string& name, const std::vector<double>& v, std::vector<std::uint64_t> shape) {
  return Tensor::f32(name, std::move(shape), std::vector<float>(v.begin(), v.end()));
}

LinearProbe probe_from(const TensorBundle& b, const std::string& prefix, const fs::path& from) {
  const auto& w = entry(b, prefix + "_w", from);
  const auto& bias = entry(b, prefix + "_b", from);
  LinearProbe p(w.shape.at(0), w.shape.at(1));
  const auto& wv = w.as_f32();
  const auto& bv = bias.as_f32();
  if (bv.size() != p.num_classes) throw StageError(kExitStageFailure, "corrupt_input", prefix + " bias shape");
  p.weights.assign(wv.begin(), wv.end());
  p.bias.assign(bv.begin(), bv.end());
  return p;
}

void add_probes(TensorBundle& out, const ProbePair& probes) {
  const std::uint64_t c = probes.a.num_classes, d = probes.a.dim;
  out.add(probe_tensor("probeA_w", probes.a.weights, {c, d}));
  out.add(probe_tensor("probeA_b", probes.a.bias, {c}));
  out.add(probe_tensor("probeB_w", probes.b.weights, {c, d}));
  out.add(probe_tensor("probeB_b", probes.b.bias, {c}));
}

FeatureMatrix load_features(StageRun& run, const PipelineConfig& cfg, const DatasetManifest& manifest) {
  const auto b = run.bundle(cfg.paths.features);
  FeatureMatrix f{matrix_entry(b, "features", cfg.paths.features), manifest.sample_ids};
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw StageError(kExitStageFailure, "corrupt_input", std::string("features: ") + e.what());
  }
  return f;
}

MultiViewPredictions load_multiview(StageRun& run, const PipelineConfig& cfg, const DatasetManifest& manifest) {
  const auto b = run.bundle(cfg.paths.multiview);
  const auto& t = entry(b, "probs_multiview", cfg.paths.multiview);
  if (t.shape.size() != 3 || t.shape[0] != manifest.sample_ids.size())
    throw StageError(kExitStageFailure, "corrupt_input", "probs_multiview must be [N x K x C]");
  if (cfg.expected_views != 0 && t.shape[1] != cfg.expected_views)
    throw ConfigError("mvc.K = " + std::to_string(cfg.expected_views) + " but data has " +
                      std::to_string(t.shape[1]) + " views");
  MultiViewPredictions mv;
  mv.num_views = t.shape[1];
  mv.num_classes = t.shape[2];
  mv.probs = t.as_f32();
  mv.sample_ids = manifest.sample_ids;
  return mv;
}

SelectionResult selection_from(const TensorBundle& b, const fs::path& from, const DatasetManifest& manifest,
                               StageTag tag) {
  const auto n = manifest.sample_ids.size();
  const auto& mask = u32_entry(b, "selected_mask", from, n);
  const auto& labels = u32_entry(b, "pseudo_labels", from, n);
  SelectionResult s;
  s.stage = tag;
  s.sample_ids = manifest.sample_ids;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (mask[i]) {
      s.selected.push_back(i);
      s.labels.push_back(labels[i]);
    } else {
      s.rejected.push_back(i);
    }
  }
  return s;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StageError(kExitStageFailure, "io_error", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ordered_json report_json(const TrainReport& report) {
  ordered_json epochs = ordered_json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"supervised_loss", e.supervised_loss},
                      {"unsupervised_loss", e.unsupervised_loss},
                      {"supervised_loss_a", e.supervised_loss_a},
                      {"supervised_loss_b", e.supervised_loss_b},
                      {"unsupervised_loss_a", e.unsupervised_loss_a},
                      {"unsupervised_loss_b", e.unsupervised_loss_b},
                      {"gate_open_fraction", e.gate_open_fraction},
                      {"learning_rate", e.learning_rate}});
  }
  return {{"epochs", std::move(epochs)}};
}

std::size_t target_classes(const DatasetManifest& m) {
  if (m.num_classes() == 0) throw StageError(kExitStageFailure, "corrupt_input", "manifest has no classes");
  return m.num_classes();
}

// ---------------------------------------------------------------------------

void stage_synth(const PipelineConfig& cfg) {
  StageRun run(Stage::synth, cfg);
  SynthDataset data;
  try {
    data = synth_generate(cfg.synth);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  TensorBundle train;
  train.add(matrix_tensor("features", data.features.vectors));
  train.add(Tensor::f32("probs_multiview",
                        {data.multiview.size(), data.multiview.num_views, data.multiview.num_classes},
                        data.multiview.probs));
  train.add(matrix_tensor("class_embeddings", data.class_embeddings.vectors));
  write_bundle_file(train, run.output(kTrainBundle));
  write_manifest_file(data.manifest, run.output(kTrainManifest));

  TensorBundle truth;
  truth.add(vector_tensor("labels", data.truth));
  truth.add(vector_tensor("prompt_labels", data.prompt_labels));
  if (!data.slide_truth.empty()) truth.add(vector_tensor("slide_labels", data.slide_truth));
  write_bundle_file(truth, run.output(kGroundTruth));
  run.finish();
}

void stage_zeroshot(const PipelineConfig& cfg) {
  StageRun run(Stage::zeroshot, cfg);
  const auto manifest = run.manifest(cfg.paths.manifest);
  const auto features = load_features(run, cfg, manifest);
  const auto eb = run.bundle(cfg.paths.class_embeddings);
  ClassEmbeddings classes{matrix_entry(eb, "class_embeddings", cfg.paths.class_embeddings), cfg.tau,
                          cfg.temperature_mode};
  if (classes.vectors.rows != manifest.num_classes() + manifest.num_open_set())
    throw StageError(kExitStageFailure, "corrupt_input", "class_embeddings rows must equal C + Q");

  std::vector<Matrix> members{zero_shot_probs(features, classes)};
  for (const auto& extra : cfg.paths.extra_probs) {
    const auto b = run.bundle(extra);
    members.push_back(matrix_entry(b, "probs", extra));
  }
  TensorBundle out;
  out.add(matrix_tensor("probs", ensemble_probs(members)));
  write_bundle_file(out, run.output(kZeroshotBundle));
  run.finish();
}

void stage_mvc(const PipelineConfig& cfg) {
  StageRun run(Stage::mvc, cfg);
  const auto manifest = run.manifest(cfg.paths.manifest);
  const auto mv = load_multiview(run, cfg, manifest);
  const auto scores = score_views(mv);
  const auto sel = cfg.class_aware ? select_cmvc(scores, cfg.select_percent) : select_mvc(scores, cfg.select_percent);

  TensorBundle out;
  out.add(vector_tensor("selected_mask", sel.selected_mask()));
  out.add(vector_tensor("pseudo_labels", scores.pseudo_label));
  std::vector<float> entropy(scores.entropy.begin(), scores.entropy.end());
  const std::uint64_t n = entropy.size();
  out.add(Tensor::f32("entropy", {n}, std::move(entropy)));
  Matrix votes(scores.size(), mv.num_classes);
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t c = 0; c < mv.num_classes; ++c) votes(i, c) = static_cast<float>(scores.vote_dist[i][c]);
  out.add(matrix_tensor("vote_dist", votes));
  write_bundle_file(out, run.output(kMvcBundle));
  run.finish();
}

void stage_pfc(const PipelineConfig& cfg) {
  StageRun run(Stage::pfc, cfg);
  const auto manifest = run.manifest(cfg.paths.manifest);
  const auto features = load_features(run, cfg, manifest);
  const fs::path mvc_path = cfg.out_dir / kMvcBundle;
  const auto prompt = selection_from(run.bundle(mvc_path), mvc_path, manifest,
                                     cfg.class_aware ? StageTag::cmvc : StageTag::mvc);
  auto params = cfg.kmeans;
  params.seed = cfg.seed;
  const auto result = run_pfc(features, prompt, target_classes(manifest), params);

  TensorBundle out;
  out.add(vector_tensor("selected_mask", result.selection.selected_mask()));
  out.add(vector_tensor("pseudo_labels", result.selection.label_column(kNoLabel)));
  out.add(vector_tensor("cluster_of", result.clusters.cluster_of));
  out.add(vector_tensor("mapping_perm", result.mapping.perm));
  out.add(matrix_tensor("centroids", result.clusters.centroids));
  write_bundle_file(out, run.output(kPfcBundle));
  run.finish();
}

void stage_hcs(const PipelineConfig& cfg) {
  StageRun run(Stage::hcs, cfg);
  const auto manifest = run.manifest(cfg.paths.manifest);
  const auto features = load_features(run, cfg, manifest);
  const fs::path pfc_path = cfg.out_dir / kPfcBundle;
  const auto split = selection_from(run.bundle(pfc_path), pfc_path, manifest, StageTag::pfc);
  auto hcs = cfg.hcs;
  hcs.seed = cfg.seed;
  const auto report = train_hcs(features, split, target_classes(manifest), hcs);

  TensorBundle out;
  add_probes(out, report.probes);
  write_bundle_file(out, run.output(kProbesBundle));
  write_json(run.output(kHcsReport), report_json(report));
  run.finish();
}

void stage_wsi(const PipelineConfig& cfg) {
  StageRun run(Stage::wsi, cfg);
  const auto manifest = run.manifest(cfg.paths.manifest);
  if (!manifest.slide_of) throw MissingInput("wsi needs a manifest with slide_of");
  const auto features = load_features(run, cfg, manifest);
  const auto mv = load_multiview(run, cfg, manifest);
  const fs::path zs_path = cfg.out_dir / kZeroshotBundle;
  const auto prompt_probs = matrix_entry(run.bundle(zs_path), "probs", zs_path);

  WsiConfig wc;
  wc.select_percent = cfg.select_percent;
  wc.class_aware = cfg.class_aware;
  wc.kmeans = cfg.kmeans;
  wc.kmeans.seed = cfg.seed;
  wc.hcs = cfg.hcs;
  wc.hcs.seed = cfg.seed;
  const auto result = slide_pipeline(manifest, mv, features, prompt_probs, wc);
  const std::size_t c = target_classes(manifest);

  TensorBundle out;
  Matrix slide_probs(result.slides.slides.size(), c);
  std::vector<std::uint32_t> slide_labels;
  ordered_json slide_ids = ordered_json::array();
  for (std::size_t s = 0; s < result.slides.slides.size(); ++s) {
    const auto& sl = result.slides.slides[s];
    for (std::size_t k = 0; k < c; ++k) slide_probs(s, k) = static_cast<float>(sl.probs[k]);
    slide_labels.push_back(sl.label);
    slide_ids.push_back(sl.slide_id);
  }
  out.add(matrix_tensor("slide_probs", slide_probs));
  out.add(vector_tensor("slide_labels", slide_labels));
  out.add(vector_tensor("osp_mask", result.osp.selected_mask()));
  out.add(vector_tensor("mvc_mask", result.mvc.selected_mask()));
  out.add(vector_tensor("selected_mask", result.pfc.selection.selected_mask()));
  out.add(vector_tensor("pseudo_labels", result.pfc.selection.label_column(kNoLabel)));
  out.add(matrix_tensor("patch_probs", result.patch_probs));
  add_probes(out, result.training.probes);
  write_bundle_file(out, run.output(kWsiBundle));

  ordered_json report;
  report["slides"] = slide_ids;
  report["excluded_slides"] = result.slides.excluded_slides;
  report["osp_kept"] = result.osp.selected.size();
  report["mvc_selected"] = result.mvc.selected.size();
  report["pfc_selected"] = result.pfc.selection.selected.size();
  report["training"] = report_json(result.training);
  write_json(run.output(kWsiReport), report);
  run.finish();
}

void stage_eval(const PipelineConfig& cfg) {
  StageRun run(Stage::eval, cfg);
  const auto manifest = run.manifest(cfg.paths.manifest);
  const auto truth_bundle = run.bundle(cfg.paths.ground_truth);
  const auto n = manifest.sample_ids.size();
  const auto& truth = u32_entry(truth_bundle, "labels", cfg.paths.ground_truth, n);
  const std::size_t c = target_classes(manifest);

  ordered_json report;
  report["macro_convention"] = "macro means divide by C; classes with a zero denominator contribute 0";
  auto all_selected = [&](std::vector<std::uint32_t> labels, StageTag tag) {
    SelectionResult s;
    s.stage = tag;
    s.sample_ids = manifest.sample_ids;
    for (std::uint32_t i = 0; i < n; ++i) s.selected.push_back(i);
    s.labels = std::move(labels);
    return s;
  };

  if (manifest.num_open_set() == 0) {
    const fs::path zs = cfg.out_dir / kZeroshotBundle;
    if (fs::exists(zs)) {
      const auto probs = matrix_entry(run.bundle(zs), "probs", zs);
      std::vector<std::uint32_t> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = argmax_label(probs.row(i));
      report["zero_shot"] = to_json(pseudo_label_report(all_selected(labels, StageTag::mvc), truth, c));
    }
    const fs::path mvc = cfg.out_dir / kMvcBundle;
    if (fs::exists(mvc))
      report["mvc"] = to_json(pseudo_label_report(selection_from(run.bundle(mvc), mvc, manifest, StageTag::mvc), truth, c));
    const fs::path pfc = cfg.out_dir / kPfcBundle;
    if (fs::exists(pfc))
      report["pfc"] = to_json(pseudo_label_report(selection_from(run.bundle(pfc), pfc, manifest, StageTag::pfc), truth, c));
    const fs::path probes = cfg.out_dir / kProbesBundle;
    if (fs::exists(probes)) {
      const auto b = run.bundle(probes);
      const auto features = load_features(run, cfg, manifest);
      const auto pred = predict_pair(probe_from(b, "probeA", probes), probe_from(b, "probeB", probes), features.vectors);
      std::vector<std::uint32_t> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = argmax_label(pred.row(i));
      report["probes"] = to_json(pseudo_label_report(all_selected(labels, StageTag::pfc), truth, c));
    }
  }

  const fs::path wsi = cfg.out_dir / kWsiBundle;
  if (fs::exists(wsi) && manifest.slide_of) {
    const auto slide_order = manifest.slide_ids();
    const auto& slide_truth = u32_entry(truth_bundle, "slide_labels", cfg.paths.ground_truth, slide_order.size());
    const auto b = run.bundle(wsi);
    const auto& predicted = entry(b, "slide_labels", wsi).as_u32();
    json wsi_report;
    std::ifstream(cfg.out_dir / kWsiReport) >> wsi_report;
    const auto kept = wsi_report.at("slides").get<std::vector<std::string>>();
    std::map<std::string, std::uint32_t> truth_of;
    for (std::size_t s = 0; s < slide_order.size(); ++s) truth_of[slide_order[s]] = slide_truth[s];
    std::vector<std::uint32_t> t;
    for (const auto& id : kept) t.push_back(truth_of.at(id));
    PseudoLabelReport r;
    r.n = kept.size();
    r.confusion = confusion(t, predicted, c);
    if (r.n > 0) r.scores = macro_scores(r.confusion);
    report["slides"] = to_json(r);
  }
  write_json(run.output(kEvalReport), report);
  run.finish();
}

void stage_pipeline(const PipelineConfig& cfg) {
  DatasetManifest manifest;
  if (!fs::exists(cfg.paths.manifest)) throw MissingInput("pipeline needs " + cfg.paths.manifest.string());
  try {
    manifest = read_manifest_file(cfg.paths.manifest);
  } catch (const ManifestError& e) {
    throw StageError(kExitStageFailure, "corrupt_input", e.what());
  }
  run_stage(Stage::zeroshot, cfg);
  if (manifest.slide_of) {
    run_stage(Stage::wsi, cfg);
  } else {
    run_stage(Stage::mvc, cfg);
    run_stage(Stage::pfc, cfg);
    run_stage(Stage::hcs, cfg);
  }
  if (fs::exists(cfg.paths.ground_truth)) run_stage(Stage::eval, cfg);
}

void set_pointer(json& doc, const std::string& dotted, json value) {
  std::string pointer;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("bad override key '" + dotted + "'");
    pointer += "/" + part;
  }
  doc[json::json_pointer(pointer)] = std::move(value);
}

}  // namespace

Stage parse_stage(const std::string& name) {
  static const std::map<std::string, Stage> stages{
      {"zeroshot", Stage::zeroshot}, {"mvc", Stage::mvc},   {"pfc", Stage::pfc},     {"hcs", Stage::hcs},
      {"wsi", Stage::wsi},           {"eval", Stage::eval}, {"synth", Stage::synth}, {"pipeline", Stage::pipeline}};
  auto it = stages.find(name);
  if (it == stages.end()) throw ConfigError("unknown stage '" + name + "'");
  return it->second;
}

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::zeroshot: return "zeroshot";
    case Stage::mvc: return "mvc";
    case Stage::pfc: return "pfc";
    case Stage::hcs: return "hcs";
    case Stage::wsi: return "wsi";
    case Stage::eval: return "eval";
    case Stage::synth: return "synth";
    case Stage::pipeline: return "pipeline";
  }
  return "unknown";
}

std::string content_digest(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return content_digest(bytes);
}

json default_config_json() {
  const HcsConfig hcs;
  const KMeansParams km;
  auto synth = json(to_json(SynthSpec{}));
  synth.erase("seed");
  return {
      {"out_dir", "out"},
      {"seed", 0},
      {"paths",
       {{"features", ""},
        {"multiview", ""},
        {"class_embeddings", ""},
        {"manifest", ""},
        {"ground_truth", ""},
        {"extra_probs", json::array()}}},
      {"zeroshot", {{"tau", kDefaultTemperature}, {"temperature_mode", "divide"}}},
      {"mvc", {{"M", kDefaultSelectPercent}, {"K", 0}, {"class_aware", false}}},
      {"kmeans", {{"restarts", km.restarts}, {"max_iter", km.max_iter}, {"tol", km.tol}}},
      {"hcs",
       {{"gamma", hcs.gamma},
        {"lambda_u", hcs.lambda_u},
        {"learning_rate", hcs.learning_rate},
        {"weight_decay", hcs.weight_decay},
        {"epochs", hcs.epochs},
        {"batch_labeled", hcs.batch_labeled},
        {"batch_unlabeled", hcs.batch_unlabeled},
        {"lr_decay", {{"factor", hcs.lr_decay.factor}, {"every_n_epochs", hcs.lr_decay.every_n_epochs}}},
        {"view_dropout", hcs.view_dropout},
        {"init_scale", hcs.init_scale}}},
      {"synth", synth},
  };
}

PipelineConfig config_from_json(const json& merged) {
  PipelineConfig cfg;
  cfg.raw = merged;
  try {
    cfg.out_dir = merged.at("out_dir").get<std::string>();
    cfg.seed = merged.at("seed").get<std::uint64_t>();
    auto path_or = [&](const char* key, const char* fallback) {
      const auto v = merged.at("paths").at(key).get<std::string>();
      return v.empty() ? cfg.out_dir / fallback : fs::path(v);
    };
    cfg.paths.features = path_or("features", kTrainBundle);
    cfg.paths.multiview = path_or("multiview", kTrainBundle);
    cfg.paths.class_embeddings = path_or("class_embeddings", kTrainBundle);
    cfg.paths.manifest = path_or("manifest", kTrainManifest);
    cfg.paths.ground_truth = path_or("ground_truth", kGroundTruth);
    for (const auto& p : merged.at("paths").at("extra_probs")) cfg.paths.extra_probs.emplace_back(p.get<std::string>());

    const auto& zs = merged.at("zeroshot");
    cfg.tau = zs.at("tau").get<float>();
    const auto mode = zs.at("temperature_mode").get<std::string>();
    if (mode == "divide") {
      cfg.temperature_mode = TemperatureMode::divide;
    } else if (mode == "exp_scale") {
      cfg.temperature_mode = TemperatureMode::exp_scale;
    } else {
      throw ConfigError("zeroshot.temperature_mode must be 'divide' or 'exp_scale'");
    }
    if (!(cfg.tau > 0.0f)) throw ConfigError("zeroshot.tau must be > 0");

    const auto& mvc = merged.at("mvc");
    cfg.select_percent = mvc.at("M").get<double>();
    cfg.expected_views = mvc.at("K").get<std::size_t>();
    cfg.class_aware = mvc.at("class_aware").get<bool>();
    if (!(cfg.select_percent > 0.0 && cfg.select_percent <= 100.0)) throw ConfigError("mvc.M must be in (0, 100]");

    const auto& km = merged.at("kmeans");
    cfg.kmeans.restarts = km.at("restarts").get<std::size_t>();
    cfg.kmeans.max_iter = km.at("max_iter").get<std::size_t>();
    cfg.kmeans.tol = km.at("tol").get<double>();
    cfg.kmeans.seed = cfg.seed;
    if (cfg.kmeans.restarts < 1 || cfg.kmeans.max_iter < 1) throw ConfigError("kmeans counts must be >= 1");

    const auto& h = merged.at("hcs");
    cfg.hcs.gamma = h.at("gamma").get<double>();
    cfg.hcs.lambda_u = h.at("lambda_u").get<double>();
    cfg.hcs.learning_rate = h.at("learning_rate").get<double>();
    cfg.hcs.weight_decay = h.at("weight_decay").get<double>();
    cfg.hcs.epochs = h.at("epochs").get<std::size_t>();
    cfg.hcs.batch_labeled = h.at("batch_labeled").get<std::size_t>();
    cfg.hcs.batch_unlabeled = h.at("batch_unlabeled").get<std::size_t>();
    cfg.hcs.lr_decay.factor = h.at("lr_decay").at("factor").get<double>();
    cfg.hcs.lr_decay.every_n_epochs = h.at("lr_decay").at("every_n_epochs").get<std::size_t>();
    cfg.hcs.view_dropout = h.at("view_dropout").get<double>();
    cfg.hcs.init_scale = h.at("init_scale").get<double>();
    cfg.hcs.seed = cfg.seed;
    cfg.hcs.validate();

    cfg.synth = synth_spec_from_json(merged.at("synth"));
    cfg.synth.seed = cfg.seed;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::optional<fs::path>& config_file, const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed, const std::optional<fs::path>& out_dir) {
  json merged = default_config_json();
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw MissingInput("cannot open config " + config_file->string());
    try {
      merged.merge_patch(json::parse(in));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must be KEY=VALUE, got '" + kv + "'");
    const auto key = kv.substr(0, eq);
    const auto text = kv.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    try {
      set_pointer(merged, key, std::move(value));
    } catch (const json::exception& e) {
      throw ConfigError("cannot apply override '" + kv + "': " + e.what());
    }
  }
  if (seed) merged["seed"] = *seed;
  if (out_dir) merged["out_dir"] = out_dir->string();
  return config_from_json(merged);
}

void run_stage(Stage stage, const PipelineConfig& config) {
  try {
    switch (stage) {
      case Stage::synth: return stage_synth(config);
      case Stage::zeroshot: return stage_zeroshot(config);
      case Stage::mvc: return stage_mvc(config);
      case Stage::pfc: return stage_pfc(config);
      case Stage::hcs: return stage_hcs(config);
      case Stage::wsi: return stage_wsi(config);
      case Stage::eval: return stage_eval(config);
      case Stage::pipeline: return stage_pipeline(config);
    }
  } catch (const StageError&) {
    throw;
  } catch (const NumericFailure& e) {
    throw StageError(kExitNumericFailure, "numeric_failure", e.what());
  } catch (const std::domain_error& e) {
    throw StageError(kExitNumericFailure, "numeric_failure", e.what());
  } catch (const std::exception& e) {
    throw StageError(kExitStageFailure, "stage_failure", std::string(to_string(stage)) + ": " + e.what());
  }
}

}  // namespace vlmcpl
