#pragma once

#include <span>
#include <string>

#include <Eigen/Core>

#include "fre/tensor.hpp"

namespace fre {

inline constexpr double kDefaultVarianceThreshold = 0.995;
// Singular values below this fraction of the largest count as zero rank.
inline constexpr double kRankCutoff = 1e-7;

/// Truncated PCA model of one layer's features.
///
/// `components` holds the m principal directions as orthonormal rows, so the
/// forward map is z = components * (u - mean) and its Moore-Penrose
/// pseudo-inverse is u' = components^T * z + mean.
struct SubspaceModel {
  std::string layer_id;
  Shape3 feature_shape;
  Eigen::VectorXf mean;
  RowMatrixF components;
  Eigen::VectorXf singular_values;
  double variance_threshold = kDefaultVarianceThreshold;
  // Fraction of total centered variance captured by the m components.
  double explained_variance = 0.0;

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index rank() const { return components.rows(); }

  friend bool operator==(const SubspaceModel& a, const SubspaceModel& b);
};

struct FitStats {
  Eigen::Index samples = 0;
  Eigen::Index numerical_rank = 0;
  bool used_gram = false;
};

// Errors: kInvalidArgument (threshold outside (0, 1]), kNonFinite,
// kDegenerateData (zero variance), kNumerical.
SubspaceModel fit(const FeatureBatch& batch, double variance_threshold = kDefaultVarianceThreshold,
                  FitStats* stats = nullptr);

Eigen::VectorXf transform(const SubspaceModel& model, std::span<const float> u);
Eigen::VectorXf reconstruct(const SubspaceModel& model, std::span<const float> z);

// u - reconstruct(transform(u)), computed without materializing the
// reconstruction separately.
Eigen::VectorXf residual(const SubspaceModel& model, std::span<const float> u);

}  // namespace fre
