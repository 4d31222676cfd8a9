#pragma once

// Reference implementations used only by tests. Each one is written the slow,
// obvious way and shares no code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

// Fraction of (positive, negative) pairs ordered correctly, ties as 1/2.
inline double auroc_pairs(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / pairs;
}

// Breadth-first 8-connected flood fill; regions are numbered in raster order
// of their first pixel.
inline std::vector<int> flood_labels(const std::vector<std::uint8_t>& mask, int h, int w, int* count) {
  std::vector<int> labels(mask.size(), 0);
  int next = 0;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (!mask[i * w + j] || labels[i * w + j]) continue;
      ++next;
      std::deque<std::pair<int, int>> queue{{i, j}};
      labels[i * w + j] = next;
      while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy;
            const int nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            if (!mask[ny * w + nx] || labels[ny * w + nx]) continue;
            labels[ny * w + nx] = next;
            queue.emplace_back(ny, nx);
          }
        }
      }
    }
  }
  if (count) *count = next;
  return labels;
}

struct OracleImage {
  int h = 0;
  int w = 0;
  std::vector<float> map;
  std::vector<std::uint8_t> mask;
};

// Sweeps every distinct map value as a threshold (prediction = value >= t),
// evaluates FPR and mean per-region overlap directly, prepends (0, 0), and
// integrates the piecewise-linear curve over [0, limit] divided by limit.
inline double pro_exhaustive(const std::vector<OracleImage>& images, double limit) {
  std::vector<float> values;
  for (const auto& im : images) values.insert(values.end(), im.map.begin(), im.map.end());
  std::sort(values.begin(), values.end(), std::greater<>());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  std::vector<std::pair<double, double>> points{{0.0, 0.0}};
  for (float t : values) {
    double fp = 0.0;
    double negatives = 0.0;
    double overlap_sum = 0.0;
    int regions = 0;
    for (const auto& im : images) {
      int count = 0;
      const auto labels = flood_labels(im.mask, im.h, im.w, &count);
      for (int r = 1; r <= count; ++r) {
        double hit = 0.0;
        double size = 0.0;
        for (std::size_t p = 0; p < labels.size(); ++p) {
          if (labels[p] != r) continue;
          size += 1.0;
          if (im.map[p] >= t) hit += 1.0;
        }
        overlap_sum += hit / size;
        ++regions;
      }
      for (std::size_t p = 0; p < im.mask.size(); ++p) {
        if (im.mask[p]) continue;
        negatives += 1.0;
        if (im.map[p] >= t) fp += 1.0;
      }
    }
    points.emplace_back(fp / negatives, overlap_sum / regions);
  }

  double area = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k) {
    auto [x0, y0] = points[k - 1];
    auto [x1, y1] = points[k];
    if (x0 >= limit) break;
    if (x1 > limit) {
      const double y_at = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
      area += (limit - x0) * (y0 + y_at) / 2.0;
      break;
    }
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  return area / limit;
}

// Bilinear sample of an h x w grid at output pixel (i, j) of an oh x ow
// target, pixel centres aligned (source coordinate (o + 0.5) * in / out - 0.5,
// clamped to the grid).
inline double bilinear_at(const std::vector<float>& src, int h, int w, int oh, int ow, int i, int j) {
  auto coord = [](int o, int in, int out) {
    double c = (o + 0.5) * static_cast<double>(in) / out - 0.5;
    return std::clamp(c, 0.0, static_cast<double>(in - 1));
  };
  const double y = coord(i, h, oh);
  const double x = coord(j, w, ow);
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  return (1 - fy) * (1 - fx) * src[y0 * w + x0] + (1 - fy) * fx * src[y0 * w + x1] + fy * (1 - fx) * src[y1 * w + x0] +
         fy * fx * src[y1 * w + x1];
}

// 3x3 convolution, padding 1, then ReLU, on a (C, H, W) tensor.
inline std::vector<double> conv3x3_relu(const std::vector<double>& in, int c_in, int h, int w,
                                        const std::vector<float>& weight, const std::vector<float>& bias, int c_out,
                                        int stride, int* oh_out, int* ow_out) {
  const int oh = (h + 2 - 3) / stride + 1;
  const int ow = (w + 2 - 3) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(c_out) * oh * ow);
  for (int o = 0; o < c_out; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = bias[o];
        for (int c = 0; c < c_in; ++c) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int sy = y * stride + ky - 1;
              const int sx = x * stride + kx - 1;
              if (sy < 0 || sx < 0 || sy >= h || sx >= w) continue;
              acc += static_cast<double>(weight[((o * c_in + c) * 3 + ky) * 3 + kx]) * in[(c * h + sy) * w + sx];
            }
          }
        }
        out[(o * oh + y) * ow + x] = std::max(0.0, acc);
      }
    }
  }
  *oh_out = oh;
  *ow_out = ow;
  return out;
}

// Orthogonal projection of u onto the affine span {mean + B^T z} found by
// solving the normal equations (B B^T) z = B (u - mean) for an arbitrary
// (not necessarily orthonormal) spanning set B.
inline Eigen::VectorXd affine_projection(const Eigen::MatrixXd& basis_rows, const Eigen::VectorXd& mean,
                                         const Eigen::VectorXd& u) {
  const Eigen::MatrixXd gram = basis_rows * basis_rows.transpose();
  const Eigen::VectorXd rhs = basis_rows * (u - mean);
  const Eigen::VectorXd z = gram.ldlt().solve(rhs);
  return mean + basis_rows.transpose() * z;
}

// Rows mean + z_i^T A with z_i ~ N(0, I_k): samples from a k-dim affine manifold.
inline Eigen::MatrixXf manifold_rows(int rows, int dim, int k, std::mt19937& rng, Eigen::MatrixXd* basis = nullptr,
                                     Eigen::VectorXd* mean_out = nullptr) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd a(k, dim);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < dim; ++c) a(r, c) = n01(rng);
  }
  Eigen::VectorXd mean(dim);
  for (int c = 0; c < dim; ++c) mean(c) = 2.0 * n01(rng);
  Eigen::MatrixXf out(rows, dim);
  for (int i = 0; i < rows; ++i) {
    Eigen::VectorXd z(k);
    for (int r = 0; r < k; ++r) z(r) = n01(rng);
    out.row(i) = (mean + a.transpose() * z).cast<float>().transpose();
  }
  if (basis) *basis = a;
  if (mean_out) *mean_out = mean;
  return out;
}

}  // namespace oracle
