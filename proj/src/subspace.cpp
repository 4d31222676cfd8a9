#include "fre/subspace.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "fre/error.hpp"

namespace fre {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Column block width for streaming passes over the (M x d) data matrix, sized
// so one double-precision block stays around 8 MB.
Index block_width(Index samples, Index dim) {
  const Index target = (Index{1} << 20) / std::max<Index>(samples, 1);
  return std::clamp<Index>(target, 256, std::max<Index>(dim, 1));
}

MatrixXd centered_block(const RowMatrixF& rows, const VectorXd& mean, Index col, Index width) {
  MatrixXd block = rows.middleCols(col, width).cast<double>();
  block.rowwise() -= mean.segment(col, width).transpose();
  return block;
}

// Index of the retained component count for a variance threshold, given
// eigenvalues sorted in descending order.
Index select_rank(const VectorXd& eigenvalues, double total, double threshold, Index numerical_rank) {
  if (threshold >= 1.0) return numerical_rank;
  double cumulative = 0.0;
  for (Index i = 0; i < numerical_rank; ++i) {
    cumulative += eigenvalues(i);
    if (cumulative >= threshold * total) return i + 1;
  }
  return numerical_rank;
}

// Cholesky-QR pass: replaces rows V by L^{-1} V where V V^T = L L^T, so the
// rows become orthonormal. Accumulates the Gram matrix in double precision.
void orthonormalize_rows(RowMatrixF& v) {
  const Index m = v.rows();
  const Index d = v.cols();
  const Index width = block_width(m, d);
  for (int pass = 0; pass < 2; ++pass) {
    MatrixXd gram = MatrixXd::Zero(m, m);
    for (Index c = 0; c < d; c += width) {
      const Index w = std::min(width, d - c);
      MatrixXd block = v.middleCols(c, w).cast<double>();
      gram.selfadjointView<Eigen::Lower>().rankUpdate(block);
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    if ((gram - MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-9) return;
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kNumerical, "component re-orthonormalization failed");
    }
    const MatrixXd lower = llt.matrixL();
    for (Index c = 0; c < d; c += width) {
      const Index w = std::min(width, d - c);
      MatrixXd block = v.middleCols(c, w).cast<double>();
      v.middleCols(c, w) = lower.triangularView<Eigen::Lower>().solve(block).cast<float>();
    }
  }
}

void orient_components(RowMatrixF& v) {
  for (Index r = 0; r < v.rows(); ++r) {
    Index best = 0;
    float best_mag = -1.0f;
    for (Index c = 0; c < v.cols(); ++c) {
      const float mag = std::abs(v(r, c));
      if (mag > best_mag) {
        best_mag = mag;
        best = c;
      }
    }
    if (v(r, best) < 0.0f) v.row(r) *= -1.0f;
  }
}

void check_length(const SubspaceModel& model, std::size_t got, Index want, const char* what) {
  if (static_cast<Index>(got) != want) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + " length " + std::to_string(got) + " != " +
                                               std::to_string(want) + " for layer '" + model.layer_id + "'");
  }
}

}  // namespace

bool operator==(const SubspaceModel& a, const SubspaceModel& b) {
  return a.layer_id == b.layer_id && a.feature_shape == b.feature_shape && a.mean == b.mean &&
         a.components.rows() == b.components.rows() && a.components == b.components &&
         a.singular_values == b.singular_values && a.variance_threshold == b.variance_threshold &&
         a.explained_variance == b.explained_variance;
}

SubspaceModel fit(const FeatureBatch& batch, double variance_threshold, FitStats* stats) {
  if (!(variance_threshold > 0.0 && variance_threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "variance threshold must lie in (0, 1], got " +
                                                 std::to_string(variance_threshold));
  }
  const RowMatrixF& rows = batch.rows();
  if (!rows.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "training features for '" + batch.layer_id() + "' contain non-finite values");
  }
  const Index samples = rows.rows();
  const Index dim = rows.cols();
  const Index width = block_width(samples, dim);

  VectorXd mean = rows.cast<double>().colwise().mean().transpose();

  VectorXd eigenvalues;  // descending, of the centered scatter matrix
  MatrixXd sample_vectors;  // Gram path: M x M eigenvectors
  MatrixXd right_vectors;   // SVD path: d x k right singular vectors
  double total = 0.0;
  const bool use_gram = dim > samples;

  if (use_gram) {
    MatrixXd gram = MatrixXd::Zero(samples, samples);
    for (Index c = 0; c < dim; c += width) {
      const Index w = std::min(width, dim - c);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(centered_block(rows, mean, c, w));
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    total = gram.trace();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw Error(ErrorCode::kNumerical, "Gram eigendecomposition failed");
    eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
    sample_vectors = eig.eigenvectors().rowwise().reverse();
  } else {
    MatrixXd centered = rows.cast<double>();
    centered.rowwise() -= mean.transpose();
    total = centered.squaredNorm();
    Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinV);
    eigenvalues = svd.singularValues().array().square();
    right_vectors = svd.matrixV();
  }

  const double sigma_max = eigenvalues.size() ? std::sqrt(eigenvalues(0)) : 0.0;
  const double scale = std::max(1.0, rows.cwiseAbs().maxCoeff() * std::sqrt(static_cast<double>(samples)));
  if (!(sigma_max > 1e-10 * scale) || total <= 0.0) {
    throw Error(ErrorCode::kDegenerateData, "training features for '" + batch.layer_id() +
                                                "' have zero variance (all rows identical)");
  }
  Index numerical_rank = 0;
  while (numerical_rank < eigenvalues.size() && std::sqrt(eigenvalues(numerical_rank)) > kRankCutoff * sigma_max) {
    ++numerical_rank;
  }
  numerical_rank = std::min(numerical_rank, std::min(samples - 1, dim));
  const Index m = select_rank(eigenvalues, total, variance_threshold, numerical_rank);

  SubspaceModel model;
  model.layer_id = batch.layer_id();
  model.feature_shape = batch.shape();
  model.mean = mean.cast<float>();
  model.variance_threshold = variance_threshold;
  model.singular_values = eigenvalues.head(m).cwiseSqrt().cast<float>();
  model.explained_variance = std::min(1.0, eigenvalues.head(m).sum() / total);

  model.components.resize(m, dim);
  if (use_gram) {
    // Right singular vectors v_i = X_c^T u_i / sigma_i, one column block at a time.
    const VectorXd inv_sigma = eigenvalues.head(m).cwiseSqrt().cwiseInverse();
    const MatrixXd left = sample_vectors.leftCols(m) * inv_sigma.asDiagonal();
    for (Index c = 0; c < dim; c += width) {
      const Index w = std::min(width, dim - c);
      model.components.middleCols(c, w) = (left.transpose() * centered_block(rows, mean, c, w)).cast<float>();
    }
    orthonormalize_rows(model.components);
  } else {
    model.components = right_vectors.leftCols(m).transpose().cast<float>();
  }
  orient_components(model.components);

  if (stats) {
    stats->samples = samples;
    stats->numerical_rank = numerical_rank;
    stats->used_gram = use_gram;
  }
  return model;
}

Eigen::VectorXf transform(const SubspaceModel& model, std::span<const float> u) {
  check_length(model, u.size(), model.dim(), "feature");
  Eigen::Map<const Eigen::VectorXf> x(u.data(), model.dim());
  return model.components * (x - model.mean);
}

Eigen::VectorXf reconstruct(const SubspaceModel& model, std::span<const float> z) {
  check_length(model, z.size(), model.rank(), "embedding");
  Eigen::Map<const Eigen::VectorXf> code(z.data(), model.rank());
  Eigen::VectorXf out = model.mean;
  out.noalias() += model.components.transpose() * code;
  return out;
}

Eigen::VectorXf residual(const SubspaceModel& model, std::span<const float> u) {
  check_length(model, u.size(), model.dim(), "feature");
  Eigen::Map<const Eigen::VectorXf> x(u.data(), model.dim());
  Eigen::VectorXf centered = x - model.mean;
  const Eigen::VectorXf code = model.components * centered;
  centered.noalias() -= model.components.transpose() * code;
  return centered;
}

}  // namespace fre
