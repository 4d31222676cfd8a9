#include "fre/options.hpp"

#include "fre/error.hpp"

namespace fre {

void PreprocessConfig::validate() const {
  if (target_height < 32 || target_width < 32) {
    throw Error(ErrorCode::kConfig, "preprocess target size must be at least 32x32");
  }
  for (float s : std) {
    if (!(s > 0.0f)) throw Error(ErrorCode::kConfig, "preprocess std must be positive per channel");
  }
}

std::string to_string(Interpolation v) { return v == Interpolation::kBilinear ? "bilinear" : "nearest"; }
std::string to_string(ChannelReduction v) { return v == ChannelReduction::kAbsMean ? "abs_mean" : "signed_mean"; }
std::string to_string(MapNormalization v) { return v == MapNormalization::kNone ? "none" : "minmax"; }

Interpolation parse_interpolation(const std::string& s) {
  if (s == "bilinear") return Interpolation::kBilinear;
  if (s == "nearest") return Interpolation::kNearest;
  throw Error(ErrorCode::kConfig, "unknown interpolation '" + s + "' (bilinear|nearest)");
}

ChannelReduction parse_channel_reduction(const std::string& s) {
  if (s == "abs_mean") return ChannelReduction::kAbsMean;
  if (s == "signed_mean") return ChannelReduction::kSignedMean;
  throw Error(ErrorCode::kConfig, "unknown channel reduction '" + s + "' (abs_mean|signed_mean)");
}

MapNormalization parse_map_normalization(const std::string& s) {
  if (s == "none") return MapNormalization::kNone;
  if (s == "minmax") return MapNormalization::kMinMax;
  throw Error(ErrorCode::kConfig, "unknown map normalization '" + s + "' (none|minmax)");
}

}  // namespace fre
