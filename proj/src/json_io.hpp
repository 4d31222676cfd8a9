#pragma once

#include <json.hpp>

#include "fre/options.hpp"

namespace fre {

using nlohmann::json;

inline json preprocess_to_json(const PreprocessConfig& p) {
  return {{"target_height", p.target_height},
          {"target_width", p.target_width},
          {"mean", p.mean},
          {"std", p.std},
          {"interpolation", to_string(p.interpolation)}};
}

inline PreprocessConfig preprocess_from_json(const json& j) {
  PreprocessConfig p;
  p.target_height = j.at("target_height").get<int>();
  p.target_width = j.at("target_width").get<int>();
  p.mean = j.at("mean").get<std::array<float, 3>>();
  p.std = j.at("std").get<std::array<float, 3>>();
  p.interpolation = parse_interpolation(j.at("interpolation").get<std::string>());
  return p;
}

inline json map_options_to_json(const MapOptions& m) {
  return {{"reduction", to_string(m.reduction)},
          {"resize", to_string(m.resize)},
          {"normalization", to_string(m.normalization)},
          {"smoothing_sigma", m.smoothing_sigma}};
}

inline MapOptions map_options_from_json(const json& j) {
  MapOptions m;
  m.reduction = parse_channel_reduction(j.at("reduction").get<std::string>());
  m.resize = parse_interpolation(j.at("resize").get<std::string>());
  m.normalization = parse_map_normalization(j.at("normalization").get<std::string>());
  m.smoothing_sigma = j.at("smoothing_sigma").get<double>();
  return m;
}

}  // namespace fre
