#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fre/tensor.hpp"

namespace fre {

// Raw contents of a little-endian float32, C-order NPY file.
struct NpyArray {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

// Errors: kIo (open/read), kMalformedHeader (magic, version, dict, fortran
// order), kDtypeMismatch (anything but '<f4'), kTruncated (short payload).
NpyArray read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, std::span<const std::int64_t> shape,
               std::span<const float> data);

// Builds the NPY v1.0 header (magic through trailing newline) for a shape.
std::string npy_header(std::span<const std::int64_t> shape);

FeatureTensor load_feature_tensor(const std::filesystem::path& path, std::string layer_id);
FeatureBatch load_feature_batch(const std::filesystem::path& path, std::string layer_id);
void save_npy(const FeatureTensor& tensor, const std::filesystem::path& path);
void save_npy(const FeatureBatch& batch, const std::filesystem::path& path);
void save_npy(const AnomalyMap& map, const std::filesystem::path& path);
AnomalyMap load_map_npy(const std::filesystem::path& path);

}  // namespace fre
