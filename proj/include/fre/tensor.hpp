#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fre {

// (channels, height, width) of one layer activation.
struct Shape3 {
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels * height * width);
  }
  bool valid() const { return channels >= 1 && height >= 1 && width >= 1; }
  std::string str() const;

  friend bool operator==(const Shape3&, const Shape3&) = default;
};

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One layer's activation for one input, stored channel-major (C, H, W).
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(std::string layer_id, Shape3 shape, std::vector<float> data);

  const std::string& layer_id() const { return layer_id_; }
  const Shape3& shape() const { return shape_; }
  std::span<const float> data() const { return data_; }
  float at(std::int64_t c, std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>((c * shape_.height + i) * shape_.width + j)];
  }

  // Throws kNonFinite if any element is NaN or infinite.
  void check_finite() const;

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

 private:
  std::string layer_id_;
  Shape3 shape_;
  std::vector<float> data_;
};

/// M vectorized tensors of one layer, one per row (the training data matrix).
class FeatureBatch {
 public:
  FeatureBatch(std::string layer_id, Shape3 shape, RowMatrixF rows);

  // Stacks tensors of identical shape and layer; throws on drift.
  static FeatureBatch stack(std::span<const FeatureTensor> tensors);

  const std::string& layer_id() const { return layer_id_; }
  const Shape3& shape() const { return shape_; }
  const RowMatrixF& rows() const { return rows_; }
  std::int64_t count() const { return rows_.rows(); }
  std::int64_t dim() const { return rows_.cols(); }

 private:
  std::string layer_id_;
  Shape3 shape_;
  RowMatrixF rows_;
};

enum class MapResolution { kLayerGrid, kInput };

/// Single-channel H x W heatmap, row-major.
struct AnomalyMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<float> values;
  MapResolution resolution = MapResolution::kLayerGrid;

  AnomalyMap() = default;
  AnomalyMap(std::int64_t h, std::int64_t w, MapResolution res = MapResolution::kLayerGrid)
      : height(h), width(w), values(static_cast<std::size_t>(h * w), 0.0f), resolution(res) {}

  float& at(std::int64_t i, std::int64_t j) { return values[static_cast<std::size_t>(i * width + j)]; }
  float at(std::int64_t i, std::int64_t j) const { return values[static_cast<std::size_t>(i * width + j)]; }
  std::size_t size() const { return values.size(); }
};

std::vector<float> vectorize(const FeatureTensor& t);
FeatureTensor devectorize(std::span<const float> row, const Shape3& shape, std::string layer_id);

}  // namespace fre
