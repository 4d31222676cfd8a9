#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fre/backbone.hpp"
#include "fre/dataset.hpp"
#include "fre/metrics.hpp"
#include "fre/tensor.hpp"

namespace fre {

// A pre-extracted feature directory: `manifest.json` plus one NPY file per
// (image, layer) and an optional working-resolution mask per test image.
//
//   <dir>/manifest.json
//   <dir>/<split>/<defect>/<stem>/<layer with '/' -> '__'>.npy
//   <dir>/<split>/<defect>/<stem>/mask.npy

struct FeatureRecord {
  std::string image_id;
  Split split = Split::kTrain;
  std::string defect_type;
  std::map<std::string, std::filesystem::path> files;  // layer_id -> relative path
  std::optional<std::filesystem::path> mask_file;

  bool anomalous() const { return defect_type != "good"; }
};

class FeatureStore {
 public:
  // Errors: kIo (missing manifest), kConfig (malformed manifest).
  static FeatureStore open(const std::filesystem::path& dir);

  const std::filesystem::path& root() const { return root_; }
  const std::string& backbone() const { return backbone_; }
  const std::vector<TapSpec>& layers() const { return layers_; }
  std::int64_t input_height() const { return input_height_; }
  std::int64_t input_width() const { return input_width_; }
  const std::optional<PreprocessConfig>& preprocess() const { return preprocess_; }
  const std::vector<FeatureRecord>& records() const { return records_; }
  std::vector<FeatureRecord> records(Split split) const;

  // Errors: kMissingLayer, kShapeMismatch (file disagrees with the manifest).
  FeatureTensor load(const FeatureRecord& record, const std::string& layer_id) const;
  std::map<std::string, FeatureTensor> load_all(const FeatureRecord& record) const;
  std::optional<Mask> load_mask(const FeatureRecord& record) const;

 private:
  friend class FeatureStoreWriter;
  std::filesystem::path root_;
  std::string backbone_;
  std::vector<TapSpec> layers_;
  std::int64_t input_height_ = 0;
  std::int64_t input_width_ = 0;
  std::optional<PreprocessConfig> preprocess_;
  std::vector<FeatureRecord> records_;
};

class FeatureStoreWriter {
 public:
  FeatureStoreWriter(std::filesystem::path dir, std::string backbone, std::vector<TapSpec> layers,
                     std::int64_t input_height, std::int64_t input_width,
                     std::optional<PreprocessConfig> preprocess = std::nullopt);

  // Writes one NPY per layer (and the mask, when given) for a sample.
  void add(const std::string& image_id, Split split, const std::string& defect_type,
           const std::map<std::string, FeatureTensor>& features, const Mask* mask = nullptr);

  // Writes the manifest; the directory is readable by FeatureStore::open after this.
  FeatureStore finish();

 private:
  FeatureStore store_;
};

std::string layer_file_name(const std::string& layer_id);

}  // namespace fre
