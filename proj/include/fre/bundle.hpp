#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fre/options.hpp"
#include "fre/subspace.hpp"

namespace fre {

/// Everything needed for inference: per-layer subspace models, the
/// preprocessing used to produce their features, and the fusion setup.
struct ModelBundle {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string backbone;
  PreprocessConfig preprocess;
  MapOptions map_options;
  std::map<std::string, SubspaceModel> layers;
  std::vector<std::string> fusion_layers;
  std::string score_layer;

  // Throws kConfig unless fusion layers are a nonempty subset of `layers` and
  // the score layer has a model.
  void validate() const;

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

// `.freb` layout: "FREB", u32 version, u64 header length, JSON header,
// float32 blocks, u32 CRC32 over header and blocks. All integers little-endian.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);

// Errors: kIo, kVersionMismatch, kCorrupt (bad magic, truncation, malformed
// header), kChecksum.
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace fre
