#pragma once

#include <array>
#include <string>

namespace fre {

enum class Interpolation { kBilinear, kNearest };

// Image preprocessing recorded in every bundle so inference matches training.
struct PreprocessConfig {
  int target_height = 256;
  int target_width = 256;
  // Applied after scaling 8-bit values to [0, 1]; ImageNet convention.
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
  Interpolation interpolation = Interpolation::kBilinear;

  void validate() const;
  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

enum class ChannelReduction { kAbsMean, kSignedMean };
enum class MapNormalization { kNone, kMinMax };

struct MapOptions {
  ChannelReduction reduction = ChannelReduction::kAbsMean;
  Interpolation resize = Interpolation::kBilinear;
  MapNormalization normalization = MapNormalization::kNone;
  // Gaussian post-smoothing of the fused map; 0 disables it.
  double smoothing_sigma = 0.0;

  friend bool operator==(const MapOptions&, const MapOptions&) = default;
};

std::string to_string(Interpolation v);
std::string to_string(ChannelReduction v);
std::string to_string(MapNormalization v);
Interpolation parse_interpolation(const std::string& s);
ChannelReduction parse_channel_reduction(const std::string& s);
MapNormalization parse_map_normalization(const std::string& s);

}  // namespace fre
