#include "fre/feature_store.hpp"

#include <fstream>

#include "fre/error.hpp"
#include "fre/npy.hpp"
#include "json_io.hpp"

namespace fs = std::filesystem;

namespace fre {
namespace {

constexpr int kStoreVersion = 1;

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw Error(ErrorCode::kConfig, "unknown split '" + s + "'");
}

}  // namespace

std::string layer_file_name(const std::string& layer_id) {
  std::string out = layer_id;
  std::string::size_type pos = 0;
  while ((pos = out.find('/', pos)) != std::string::npos) {
    out.replace(pos, 1, "__");
    pos += 2;
  }
  return out + ".npy";
}

FeatureStore FeatureStore::open(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::kIo, "feature directory has no manifest: " + manifest.string());
  FeatureStore store;
  store.root_ = dir;
  try {
    const json j = json::parse(in);
    if (j.at("version").get<int>() != kStoreVersion) {
      throw Error(ErrorCode::kVersionMismatch, "unsupported feature directory version in " + manifest.string());
    }
    store.backbone_ = j.at("backbone").get<std::string>();
    store.input_height_ = j.at("input_size").at(0).get<std::int64_t>();
    store.input_width_ = j.at("input_size").at(1).get<std::int64_t>();
    if (j.contains("preprocess")) store.preprocess_ = preprocess_from_json(j.at("preprocess"));
    for (const auto& l : j.at("layers")) {
      const auto shape = l.at("shape").get<std::array<std::int64_t, 3>>();
      store.layers_.push_back({l.at("id").get<std::string>(), l.at("id").get<std::string>(),
                               Shape3{shape[0], shape[1], shape[2]}});
    }
    for (const auto& s : j.at("samples")) {
      FeatureRecord r;
      r.image_id = s.at("image_id").get<std::string>();
      r.split = parse_split(s.at("split").get<std::string>());
      r.defect_type = s.at("defect_type").get<std::string>();
      for (const auto& [layer, file] : s.at("features").items()) r.files[layer] = file.get<std::string>();
      if (s.contains("mask") && !s.at("mask").is_null()) r.mask_file = s.at("mask").get<std::string>();
      store.records_.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, "malformed feature manifest " + manifest.string() + ": " + e.what());
  }
  return store;
}

std::vector<FeatureRecord> FeatureStore::records(Split split) const {
  std::vector<FeatureRecord> out;
  for (const auto& r : records_) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

FeatureTensor FeatureStore::load(const FeatureRecord& record, const std::string& layer_id) const {
  auto it = record.files.find(layer_id);
  if (it == record.files.end()) {
    throw Error(ErrorCode::kMissingLayer, "no feature file for layer '" + layer_id + "' of " + record.image_id);
  }
  auto tensor = load_feature_tensor(root_ / it->second, layer_id);
  for (const auto& l : layers_) {
    if (l.layer_id == layer_id && l.shape != tensor.shape()) {
      throw Error(ErrorCode::kShapeMismatch, "feature shape drift for " + record.image_id + " layer '" + layer_id +
                                                 "': manifest " + l.shape.str() + ", file " + tensor.shape().str());
    }
  }
  return tensor;
}

std::map<std::string, FeatureTensor> FeatureStore::load_all(const FeatureRecord& record) const {
  std::map<std::string, FeatureTensor> out;
  for (const auto& l : layers_) out.emplace(l.layer_id, load(record, l.layer_id));
  return out;
}

std::optional<Mask> FeatureStore::load_mask(const FeatureRecord& record) const {
  if (!record.mask_file) return std::nullopt;
  const auto map = load_map_npy(root_ / *record.mask_file);
  Mask mask(map.height, map.width);
  for (std::size_t p = 0; p < map.values.size(); ++p) {
    const float v = map.values[p];
    if (v != 0.0f && v != 1.0f) throw Error(ErrorCode::kCorrupt, "mask is not binary for " + record.image_id);
    mask.values[p] = v != 0.0f ? 1 : 0;
  }
  return mask;
}

FeatureStoreWriter::FeatureStoreWriter(fs::path dir, std::string backbone, std::vector<TapSpec> layers,
                                       std::int64_t input_height, std::int64_t input_width,
                                       std::optional<PreprocessConfig> preprocess) {
  store_.root_ = std::move(dir);
  store_.backbone_ = std::move(backbone);
  store_.layers_ = std::move(layers);
  store_.input_height_ = input_height;
  store_.input_width_ = input_width;
  store_.preprocess_ = preprocess;
  fs::create_directories(store_.root_);
}

void FeatureStoreWriter::add(const std::string& image_id, Split split, const std::string& defect_type,
                             const std::map<std::string, FeatureTensor>& features, const Mask* mask) {
  FeatureRecord r;
  r.image_id = image_id;
  r.split = split;
  r.defect_type = defect_type;
  const fs::path rel_dir = fs::path(image_id);
  fs::create_directories(store_.root_ / rel_dir);
  for (const auto& l : store_.layers_) {
    auto it = features.find(l.layer_id);
    if (it == features.end()) {
      throw Error(ErrorCode::kMissingLayer, "features for " + image_id + " lack layer '" + l.layer_id + "'");
    }
    if (it->second.shape() != l.shape) {
      throw Error(ErrorCode::kShapeMismatch, "feature shape drift for " + image_id + " layer '" + l.layer_id + "'");
    }
    const fs::path rel = rel_dir / layer_file_name(l.layer_id);
    save_npy(it->second, store_.root_ / rel);
    r.files[l.layer_id] = rel;
  }
  if (mask) {
    AnomalyMap as_float(mask->height, mask->width, MapResolution::kInput);
    for (std::size_t p = 0; p < mask->values.size(); ++p) as_float.values[p] = mask->values[p] ? 1.0f : 0.0f;
    const fs::path rel = rel_dir / "mask.npy";
    save_npy(as_float, store_.root_ / rel);
    r.mask_file = rel;
  }
  store_.records_.push_back(std::move(r));
}

FeatureStore FeatureStoreWriter::finish() {
  json layers = json::array();
  for (const auto& l : store_.layers_) {
    layers.push_back({{"id", l.layer_id}, {"shape", {l.shape.channels, l.shape.height, l.shape.width}}});
  }
  json samples = json::array();
  for (const auto& r : store_.records_) {
    json files = json::object();
    for (const auto& [layer, path] : r.files) files[layer] = path.generic_string();
    samples.push_back({{"image_id", r.image_id},
                       {"split", to_string(r.split)},
                       {"defect_type", r.defect_type},
                       {"label", r.anomalous() ? 1 : 0},
                       {"features", files},
                       {"mask", r.mask_file ? json(r.mask_file->generic_string()) : json(nullptr)}});
  }
  json j = {{"format", "fre-features"},
            {"version", kStoreVersion},
            {"backbone", store_.backbone_},
            {"input_size", {store_.input_height_, store_.input_width_}},
            {"layers", layers},
            {"samples", samples}};
  if (store_.preprocess_) j["preprocess"] = preprocess_to_json(*store_.preprocess_);
  const fs::path manifest = store_.root_ / "manifest.json";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + manifest.string());
  out << j.dump(2) << "\n";
  return store_;
}

}  // namespace fre
