#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fre/bundle.hpp"
#include "fre/options.hpp"
#include "fre/subspace.hpp"
#include "fre/tensor.hpp"

namespace fre {

// Guards zero pixels in the geometric mean of fused maps.
inline constexpr double kFusionEpsilon = 1e-12;

struct FreResult {
  std::string layer_id;
  Eigen::VectorXf error;
  double score = 0.0;
  AnomalyMap map;
};

struct FusedMap {
  std::vector<std::string> layers;
  AnomalyMap map;
};

// Feature reconstruction error e = u - (T^+ o T) u for one layer activation.
Eigen::VectorXf fre_vector(const SubspaceModel& model, const FeatureTensor& u);

// l2 norm of the error vector, accumulated in double.
double fre_score(std::span<const float> e);

// Channel-wise average of the reshaped error at each location.
AnomalyMap fre_map(std::span<const float> e, const Shape3& shape,
                   ChannelReduction reduction = ChannelReduction::kAbsMean);

FreResult evaluate_layer(const SubspaceModel& model, const FeatureTensor& u,
                         ChannelReduction reduction = ChannelReduction::kAbsMean);

// Half-pixel-centre sampling (align_corners = false). Output is tagged as
// input resolution.
AnomalyMap resize_map(const AnomalyMap& map, std::int64_t height, std::int64_t width,
                      Interpolation mode = Interpolation::kBilinear);

// Per-pixel (prod_l (map_l + eps))^(1/L) - eps.
// Errors: kInvalidArgument (empty list, negative values), kShapeMismatch.
FusedMap fuse_maps(std::span<const AnomalyMap> maps, std::vector<std::string> layer_ids = {});

void normalize_min_max(AnomalyMap& map);
AnomalyMap gaussian_smooth(const AnomalyMap& map, double sigma);

struct ImageScore {
  double score = 0.0;
  std::map<std::string, double> layer_scores;
  FusedMap fused;
};

// Detection score from the bundle's score layer plus the fused map of its
// fusion layers at (height, width). Errors: kMissingLayer.
ImageScore score_image(const ModelBundle& bundle, const std::map<std::string, FeatureTensor>& features,
                       std::int64_t height, std::int64_t width);

}  // namespace fre
