#include "fre/fre.hpp"

#include <algorithm>
#include <cmath>

#include "fre/error.hpp"

namespace fre {
namespace {

struct Tap {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  float weight = 0.0f;  // weight of `hi`
};

std::vector<Tap> linear_taps(std::int64_t in, std::int64_t out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::max(src, 0.0);
    auto lo = static_cast<std::int64_t>(std::floor(src));
    if (lo >= in - 1) {
      taps[static_cast<std::size_t>(o)] = {in - 1, in - 1, 0.0f};
    } else {
      taps[static_cast<std::size_t>(o)] = {lo, lo + 1, static_cast<float>(src - static_cast<double>(lo))};
    }
  }
  return taps;
}

std::vector<std::int64_t> nearest_taps(std::int64_t in, std::int64_t out) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    idx[static_cast<std::size_t>(o)] =
        std::min(in - 1, static_cast<std::int64_t>(std::floor(static_cast<double>(o) * scale)));
  }
  return idx;
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

// Reflect-101 border index.
std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

Eigen::VectorXf fre_vector(const SubspaceModel& model, const FeatureTensor& u) {
  if (u.shape() != model.feature_shape) {
    throw Error(ErrorCode::kShapeMismatch, "feature shape " + u.shape().str() + " does not match model '" +
                                               model.layer_id + "' shape " + model.feature_shape.str());
  }
  return residual(model, u.data());
}

double fre_score(std::span<const float> e) {
  double sum = 0.0;
  for (float v : e) sum += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sum);
}

AnomalyMap fre_map(std::span<const float> e, const Shape3& shape, ChannelReduction reduction) {
  if (!shape.valid() || e.size() != shape.size()) {
    throw Error(ErrorCode::kShapeMismatch, "error vector of length " + std::to_string(e.size()) +
                                               " cannot be reshaped to " + shape.str());
  }
  AnomalyMap map(shape.height, shape.width, MapResolution::kLayerGrid);
  const auto plane = static_cast<std::size_t>(shape.height * shape.width);
  std::vector<double> acc(plane, 0.0);
  for (std::int64_t c = 0; c < shape.channels; ++c) {
    const float* src = e.data() + static_cast<std::size_t>(c) * plane;
    if (reduction == ChannelReduction::kAbsMean) {
      for (std::size_t p = 0; p < plane; ++p) acc[p] += std::abs(src[p]);
    } else {
      for (std::size_t p = 0; p < plane; ++p) acc[p] += src[p];
    }
  }
  const double inv = 1.0 / static_cast<double>(shape.channels);
  for (std::size_t p = 0; p < plane; ++p) map.values[p] = static_cast<float>(acc[p] * inv);
  return map;
}

FreResult evaluate_layer(const SubspaceModel& model, const FeatureTensor& u, ChannelReduction reduction) {
  FreResult result;
  result.layer_id = model.layer_id;
  result.error = fre_vector(model, u);
  const std::span<const float> e(result.error.data(), static_cast<std::size_t>(result.error.size()));
  result.score = fre_score(e);
  result.map = fre_map(e, model.feature_shape, reduction);
  return result;
}

AnomalyMap resize_map(const AnomalyMap& map, std::int64_t height, std::int64_t width, Interpolation mode) {
  if (height < 1 || width < 1) throw Error(ErrorCode::kInvalidArgument, "resize target must be at least 1x1");
  if (map.height < 1 || map.width < 1) throw Error(ErrorCode::kInvalidArgument, "cannot resize an empty map");
  AnomalyMap out(height, width, MapResolution::kInput);
  if (height == map.height && width == map.width) {
    out.values = map.values;
    return out;
  }
  if (mode == Interpolation::kNearest) {
    const auto ys = nearest_taps(map.height, height);
    const auto xs = nearest_taps(map.width, width);
    for (std::int64_t i = 0; i < height; ++i) {
      for (std::int64_t j = 0; j < width; ++j) {
        out.at(i, j) = map.at(ys[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)]);
      }
    }
    return out;
  }
  const auto ys = linear_taps(map.height, height);
  const auto xs = linear_taps(map.width, width);
  // Horizontal pass once per source row, then a vertical blend per output row.
  std::vector<float> rows(static_cast<std::size_t>(map.height * width));
  for (std::int64_t r = 0; r < map.height; ++r) {
    float* dst = &rows[static_cast<std::size_t>(r * width)];
    for (std::int64_t j = 0; j < width; ++j) {
      const Tap& tx = xs[static_cast<std::size_t>(j)];
      dst[j] = map.at(r, tx.lo) + tx.weight * (map.at(r, tx.hi) - map.at(r, tx.lo));
    }
  }
  for (std::int64_t i = 0; i < height; ++i) {
    const Tap& ty = ys[static_cast<std::size_t>(i)];
    const float* top = &rows[static_cast<std::size_t>(ty.lo * width)];
    const float* bottom = &rows[static_cast<std::size_t>(ty.hi * width)];
    float* dst = &out.values[static_cast<std::size_t>(i * width)];
    for (std::int64_t j = 0; j < width; ++j) dst[j] = top[j] + ty.weight * (bottom[j] - top[j]);
  }
  return out;
}

FusedMap fuse_maps(std::span<const AnomalyMap> maps, std::vector<std::string> layer_ids) {
  if (maps.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot fuse an empty map list");
  const auto& first = maps.front();
  for (const auto& m : maps) {
    if (m.height != first.height || m.width != first.width) {
      throw Error(ErrorCode::kShapeMismatch, "fused maps must share one resolution");
    }
    if (!(Eigen::Map<const Eigen::ArrayXf>(m.values.data(), static_cast<Eigen::Index>(m.size())) >= 0.0f).all()) {
      throw Error(ErrorCode::kInvalidArgument, "geometric fusion needs non-negative maps");
    }
  }
  FusedMap fused;
  fused.layers = std::move(layer_ids);
  fused.map = AnomalyMap(first.height, first.width, first.resolution);
  if (maps.size() == 1) {
    fused.map.values = first.values;
    return fused;
  }
  // Log-domain geometric mean in float keeps the loop vectorized; the relative
  // error stays at a few ulp of the exact product form.
  const auto n = static_cast<Eigen::Index>(first.size());
  const float eps = static_cast<float>(kFusionEpsilon);
  Eigen::ArrayXf log_sum = Eigen::ArrayXf::Zero(n);
  for (const auto& m : maps) log_sum += (Eigen::Map<const Eigen::ArrayXf>(m.values.data(), n) + eps).log();
  Eigen::Map<Eigen::ArrayXf>(fused.map.values.data(), n) =
      ((log_sum * (1.0f / static_cast<float>(maps.size()))).exp() - eps).max(0.0f);
  return fused;
}

void normalize_min_max(AnomalyMap& map) {
  if (map.values.empty()) return;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const float min = *lo;
  const float range = *hi - *lo;
  for (auto& v : map.values) v = range > 0.0f ? (v - min) / range : 0.0f;
}

AnomalyMap gaussian_smooth(const AnomalyMap& map, double sigma) {
  if (sigma <= 0.0) return map;
  const auto kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::int64_t>(kernel.size() / 2);
  AnomalyMap tmp(map.height, map.width, map.resolution);
  AnomalyMap out(map.height, map.width, map.resolution);
  for (std::int64_t i = 0; i < map.height; ++i) {
    for (std::int64_t j = 0; j < map.width; ++j) {
      float acc = 0.0f;
      for (std::int64_t k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] * map.at(i, reflect(j + k, map.width));
      }
      tmp.at(i, j) = acc;
    }
  }
  for (std::int64_t i = 0; i < map.height; ++i) {
    for (std::int64_t j = 0; j < map.width; ++j) {
      float acc = 0.0f;
      for (std::int64_t k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(reflect(i + k, map.height), j);
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

ImageScore score_image(const ModelBundle& bundle, const std::map<std::string, FeatureTensor>& features,
                       std::int64_t height, std::int64_t width) {
  const auto& opts = bundle.map_options;
  if (opts.reduction == ChannelReduction::kSignedMean && bundle.fusion_layers.size() > 1) {
    throw Error(ErrorCode::kConfig, "signed channel averaging can only be used with a single fusion layer");
  }
  auto feature_for = [&](const std::string& id) -> const FeatureTensor& {
    auto it = features.find(id);
    if (it == features.end()) throw Error(ErrorCode::kMissingLayer, "no feature provided for layer '" + id + "'");
    return it->second;
  };
  auto model_for = [&](const std::string& id) -> const SubspaceModel& {
    auto it = bundle.layers.find(id);
    if (it == bundle.layers.end()) throw Error(ErrorCode::kMissingLayer, "bundle has no model for layer '" + id + "'");
    return it->second;
  };

  ImageScore out;
  std::vector<AnomalyMap> resized;
  resized.reserve(bundle.fusion_layers.size());
  for (const auto& id : bundle.fusion_layers) {
    const auto result = evaluate_layer(model_for(id), feature_for(id), opts.reduction);
    out.layer_scores[id] = result.score;
    auto map = resize_map(result.map, height, width, opts.resize);
    if (opts.normalization == MapNormalization::kMinMax) normalize_min_max(map);
    resized.push_back(std::move(map));
  }
  if (!out.layer_scores.contains(bundle.score_layer)) {
    const auto e = fre_vector(model_for(bundle.score_layer), feature_for(bundle.score_layer));
    out.layer_scores[bundle.score_layer] = fre_score({e.data(), static_cast<std::size_t>(e.size())});
  }
  out.score = out.layer_scores.at(bundle.score_layer);

  if (resized.size() == 1) {
    out.fused.layers = bundle.fusion_layers;
    out.fused.map = std::move(resized.front());
  } else {
    out.fused = fuse_maps(resized, bundle.fusion_layers);
  }
  if (opts.smoothing_sigma > 0.0) out.fused.map = gaussian_smooth(out.fused.map, opts.smoothing_sigma);
  return out;
}

}  // namespace fre
