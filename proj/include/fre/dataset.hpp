#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fre/metrics.hpp"
#include "fre/options.hpp"
#include "fre/tensor.hpp"

namespace fre {

enum class Split { kTrain, kTest };
enum class DatasetLayout { kMvtec, kMtd };

std::string to_string(Split split);
std::string to_string(DatasetLayout layout);
DatasetLayout parse_layout(const std::string& s);

// One image of a category directory. `image_id` is "<split>/<defect>/<stem>".
struct Sample {
  std::string image_id;
  Split split = Split::kTrain;
  std::string defect_type;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;

  bool anomalous() const { return defect_type != "good"; }
  friend bool operator==(const Sample&, const Sample&) = default;
};

// Walks `root/{train,test}/<class>/<image>` in lexicographic order. For the
// MVTec layout every test defect image is paired with
// `root/ground_truth/<class>/<stem>_mask.png`; the MTD layout carries no masks.
// Errors: kIo (root missing, unreadable file), kEmptySplit, kMissingMask,
// kUnsupportedFile (non-image files, non-"good" train classes).
std::vector<Sample> scan_dataset(const std::filesystem::path& root, DatasetLayout layout);

std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split);

/// Decoded 8-bit RGB image, interleaved H x W x 3.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;
};

Image load_image(const std::filesystem::path& path);  // kDecode on failure
void save_image(const Image& image, const std::filesystem::path& path);
// 0/255 grayscale PNG, the ground-truth convention of MVTec.
void save_mask_png(const Mask& mask, const std::filesystem::path& path);

// Resize, scale to [0, 1], then per-channel (x - mean) / std; output (3, H, W).
FeatureTensor preprocess(const Image& image, const PreprocessConfig& config);

// Ground-truth mask at the working resolution (nearest neighbour, {0, 1}).
Mask load_mask(const std::filesystem::path& path, int height, int width);

// Mask for a sample at the working resolution; all-zero when it has none.
Mask sample_mask(const Sample& sample, const PreprocessConfig& config);

// 8-bit grayscale PNG, min-max scaled per image.
void write_heatmap_png(const AnomalyMap& map, const std::filesystem::path& path);

}  // namespace fre
