#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fre/tensor.hpp"

namespace fre {

inline constexpr double kDefaultProFprLimit = 0.3;
// Above this many distinct map values the PRO sweep switches to quantiles.
inline constexpr std::size_t kProMaxThresholds = 512;

/// Binary H x W ground-truth mask, row-major, values in {0, 1}.
struct Mask {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(std::int64_t h, std::int64_t w) : height(h), width(w), values(static_cast<std::size_t>(h * w), 0) {}
  std::uint8_t at(std::int64_t i, std::int64_t j) const { return values[static_cast<std::size_t>(i * width + j)]; }
  std::uint8_t& at(std::int64_t i, std::int64_t j) { return values[static_cast<std::size_t>(i * width + j)]; }
};

struct EvalRecord {
  std::string image_id;
  std::string defect_type;
  double score = 0.0;
  bool anomalous = false;
  std::optional<AnomalyMap> map;
  std::optional<Mask> mask;
};

struct ProCurve {
  std::vector<double> fpr;      // ascending, starts at 0, clipped to fpr_limit
  std::vector<double> overlap;  // mean per-region overlap at each fpr
  double fpr_limit = kDefaultProFprLimit;
  double area = 0.0;            // normalized integral over [0, fpr_limit]
};

// Mann-Whitney U / (n_pos * n_neg), ties credited 1/2. Errors: kSingleClass,
// kShapeMismatch.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels);

// AUROC over all pixels of all images pooled.
double pixel_auroc(std::span<const AnomalyMap> maps, std::span<const Mask> masks);

// 8-connected component labels (0 = background, regions numbered from 1).
std::vector<std::int32_t> label_regions(const Mask& mask, std::int32_t* region_count = nullptr);

// Per-region overlap curve integrated up to fpr_limit and normalized.
// Errors: kInvalidArgument (no ground-truth region, bad limit), kShapeMismatch.
ProCurve pro(std::span<const AnomalyMap> maps, std::span<const Mask> masks, double fpr_limit = kDefaultProFprLimit);

// Trapezoid integral of y(x) over [0, limit], interpolating at the limit.
double trapezoid_to(std::span<const double> x, std::span<const double> y, double limit);

}  // namespace fre
