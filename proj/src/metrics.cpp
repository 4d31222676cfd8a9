#include "fre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fre/error.hpp"

namespace fre {
namespace {

template <typename T>
double auroc_impl(std::span<const T> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "auroc: " + std::to_string(scores.size()) + " scores vs " +
                                               std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positives = 0.0;
  double negatives = 0.0;
  double u = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double group_pos = 0.0;
    double group_neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? group_pos : group_neg) += 1.0;
      ++j;
    }
    u += group_pos * negatives + 0.5 * group_pos * group_neg;
    positives += group_pos;
    negatives += group_neg;
    i = j;
  }
  if (positives == 0.0 || negatives == 0.0) {
    throw Error(ErrorCode::kSingleClass, "auroc needs both positive and negative samples");
  }
  return u / (positives * negatives);
}

void check_pairs(std::span<const AnomalyMap> maps, std::span<const Mask> masks) {
  if (maps.size() != masks.size()) {
    throw Error(ErrorCode::kShapeMismatch, "got " + std::to_string(maps.size()) + " maps but " +
                                               std::to_string(masks.size()) + " masks");
  }
  for (std::size_t k = 0; k < maps.size(); ++k) {
    if (maps[k].height != masks[k].height || maps[k].width != masks[k].width) {
      throw Error(ErrorCode::kShapeMismatch, "map/mask resolution mismatch at index " + std::to_string(k));
    }
  }
}

struct DisjointSet {
  std::vector<std::int32_t> parent;

  std::int32_t add() {
    parent.push_back(static_cast<std::int32_t>(parent.size()));
    return parent.back();
  }
  std::int32_t find(std::int32_t x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

// Descending thresholds: every distinct value when few, else evenly spaced
// order statistics (always including the minimum, so the sweep ends at fpr 1).
std::vector<float> pro_thresholds(std::vector<float> values) {
  std::sort(values.begin(), values.end());
  std::vector<float> distinct = values;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<float> out;
  if (distinct.size() <= kProMaxThresholds) {
    out = std::move(distinct);
  } else {
    const auto n = values.size();
    for (std::size_t k = 0; k < kProMaxThresholds; ++k) {
      const auto idx = static_cast<std::size_t>(
          std::llround(static_cast<double>(k) * static_cast<double>(n - 1) / static_cast<double>(kProMaxThresholds - 1)));
      out.push_back(values[idx]);
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Count of sorted-ascending values that are >= t.
std::size_t count_at_least(const std::vector<float>& sorted, float t) {
  return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  return auroc_impl(scores, labels);
}

double auroc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  return auroc_impl(scores, labels);
}

double pixel_auroc(std::span<const AnomalyMap> maps, std::span<const Mask> masks) {
  check_pairs(maps, masks);
  std::size_t total = 0;
  for (const auto& m : maps) total += m.size();
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  scores.reserve(total);
  labels.reserve(total);
  for (std::size_t k = 0; k < maps.size(); ++k) {
    scores.insert(scores.end(), maps[k].values.begin(), maps[k].values.end());
    labels.insert(labels.end(), masks[k].values.begin(), masks[k].values.end());
  }
  return auroc(std::span<const float>(scores), labels);
}

std::vector<std::int32_t> label_regions(const Mask& mask, std::int32_t* region_count) {
  const auto h = mask.height;
  const auto w = mask.width;
  std::vector<std::int32_t> provisional(mask.values.size(), -1);
  DisjointSet sets;
  auto at = [&](std::int64_t i, std::int64_t j) -> std::int32_t& {
    return provisional[static_cast<std::size_t>(i * w + j)];
  };
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      if (!mask.at(i, j)) continue;
      std::int32_t label = -1;
      // Already-visited 8-neighbours: W, NW, N, NE.
      const std::int64_t di[] = {0, -1, -1, -1};
      const std::int64_t dj[] = {-1, -1, 0, 1};
      for (int k = 0; k < 4; ++k) {
        const auto ni = i + di[k];
        const auto nj = j + dj[k];
        if (ni < 0 || nj < 0 || nj >= w) continue;
        const auto neighbour = at(ni, nj);
        if (neighbour < 0) continue;
        if (label < 0) {
          label = neighbour;
        } else {
          sets.unite(label, neighbour);
        }
      }
      at(i, j) = label < 0 ? sets.add() : label;
    }
  }
  std::vector<std::int32_t> compact(sets.parent.size(), 0);
  std::int32_t next = 0;
  for (std::size_t r = 0; r < sets.parent.size(); ++r) {
    const auto root = sets.find(static_cast<std::int32_t>(r));
    if (root == static_cast<std::int32_t>(r)) compact[r] = ++next;
  }
  std::vector<std::int32_t> labels(mask.values.size(), 0);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (provisional[p] >= 0) labels[p] = compact[static_cast<std::size_t>(sets.find(provisional[p]))];
  }
  if (region_count) *region_count = next;
  return labels;
}

double trapezoid_to(std::span<const double> x, std::span<const double> y, double limit) {
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double x0 = x[i - 1];
    const double x1 = x[i];
    if (x0 >= limit) break;
    if (x1 <= limit) {
      area += 0.5 * (x1 - x0) * (y[i - 1] + y[i]);
    } else {
      const double t = (limit - x0) / (x1 - x0);
      const double y_limit = y[i - 1] + t * (y[i] - y[i - 1]);
      area += 0.5 * (limit - x0) * (y[i - 1] + y_limit);
      break;
    }
  }
  return area;
}

ProCurve pro(std::span<const AnomalyMap> maps, std::span<const Mask> masks, double fpr_limit) {
  check_pairs(maps, masks);
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "PRO fpr limit must lie in (0, 1]");
  }
  std::vector<std::vector<float>> regions;
  std::vector<float> normal;
  std::vector<float> pooled;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    std::int32_t count = 0;
    const auto labels = label_regions(masks[k], &count);
    const auto first = regions.size();
    regions.resize(first + static_cast<std::size_t>(count));
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const float v = maps[k].values[p];
      pooled.push_back(v);
      if (labels[p] > 0) {
        regions[first + static_cast<std::size_t>(labels[p] - 1)].push_back(v);
      } else {
        normal.push_back(v);
      }
    }
  }
  if (regions.empty()) throw Error(ErrorCode::kInvalidArgument, "PRO needs at least one ground-truth region");
  if (normal.empty()) throw Error(ErrorCode::kInvalidArgument, "PRO needs at least one normal pixel");
  for (auto& r : regions) std::sort(r.begin(), r.end());
  std::sort(normal.begin(), normal.end());

  ProCurve curve;
  curve.fpr_limit = fpr_limit;
  std::vector<double> fprs{0.0};
  std::vector<double> overlaps{0.0};
  for (float t : pro_thresholds(std::move(pooled))) {
    const double fpr = static_cast<double>(count_at_least(normal, t)) / static_cast<double>(normal.size());
    double overlap = 0.0;
    for (const auto& r : regions) {
      overlap += static_cast<double>(count_at_least(r, t)) / static_cast<double>(r.size());
    }
    fprs.push_back(fpr);
    overlaps.push_back(overlap / static_cast<double>(regions.size()));
  }
  curve.area = trapezoid_to(fprs, overlaps, fpr_limit) / fpr_limit;

  for (std::size_t i = 0; i < fprs.size(); ++i) {
    if (fprs[i] > fpr_limit) {
      const double t = (fpr_limit - fprs[i - 1]) / (fprs[i] - fprs[i - 1]);
      curve.fpr.push_back(fpr_limit);
      curve.overlap.push_back(overlaps[i - 1] + t * (overlaps[i] - overlaps[i - 1]));
      break;
    }
    curve.fpr.push_back(fprs[i]);
    curve.overlap.push_back(overlaps[i]);
  }
  return curve;
}

}  // namespace fre
