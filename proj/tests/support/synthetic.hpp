#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <random>
#include <string>

#include "fre/feature_store.hpp"
#include "fre/tensor.hpp"

namespace synthetic {

// Feature directory whose single layer holds samples from a k-dim affine
// manifold. Defective test images add an off-manifold perturbation to a
// rectangle of grid cells; their masks cover the same rectangle at input size.
struct ManifoldStoreSpec {
  std::string layer_id = "syn/layer";
  fre::Shape3 shape{8, 8, 8};
  int rank = 5;
  int train = 40;
  int test_good = 20;
  int test_defect = 20;
  int input_size = 32;
  double perturbation = 3.0;
  std::uint32_t seed = 17;
};

inline void write_manifold_store(const ManifoldStoreSpec& spec, const std::filesystem::path& dir) {
  std::mt19937 rng(spec.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(spec.shape.size());
  Eigen::MatrixXd basis(spec.rank, d);
  for (Eigen::Index r = 0; r < basis.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) basis(r, c) = n01(rng);
  }
  Eigen::VectorXd mean(d);
  for (Eigen::Index c = 0; c < d; ++c) mean(c) = n01(rng);

  const auto on_manifold = [&] {
    Eigen::VectorXd z(spec.rank);
    for (int r = 0; r < spec.rank; ++r) z(r) = n01(rng);
    return Eigen::VectorXd(mean + basis.transpose() * z);
  };
  const auto tensor = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXf f = v.cast<float>();
    return std::map<std::string, fre::FeatureTensor>{
        {spec.layer_id, fre::FeatureTensor(spec.layer_id, spec.shape, std::vector<float>(f.data(), f.data() + d))}};
  };
  const auto stem = [](int i) {
    std::string s = std::to_string(i);
    return std::string(3 - std::min<std::size_t>(3, s.size()), '0') + s;
  };

  fre::FeatureStoreWriter writer(dir, "synthetic", {{spec.layer_id, "out", spec.shape}}, spec.input_size,
                                 spec.input_size);
  for (int i = 0; i < spec.train; ++i) {
    writer.add("train/good/" + stem(i), fre::Split::kTrain, "good", tensor(on_manifold()));
  }
  const fre::Mask empty(spec.input_size, spec.input_size);
  for (int i = 0; i < spec.test_good; ++i) {
    writer.add("test/good/" + stem(i), fre::Split::kTest, "good", tensor(on_manifold()), &empty);
  }
  const auto gh = static_cast<int>(spec.shape.height);
  const auto gw = static_cast<int>(spec.shape.width);
  const int cell = spec.input_size / gh;
  std::uniform_int_distribution<int> extent(2, 3);
  for (int i = 0; i < spec.test_defect; ++i) {
    Eigen::VectorXd v = on_manifold();
    const int rh = extent(rng);
    const int rw = extent(rng);
    const int top = std::uniform_int_distribution<int>(0, gh - rh)(rng);
    const int left = std::uniform_int_distribution<int>(0, gw - rw)(rng);
    fre::Mask mask(spec.input_size, spec.input_size);
    for (int y = top; y < top + rh; ++y) {
      for (int x = left; x < left + rw; ++x) {
        for (std::int64_t c = 0; c < spec.shape.channels; ++c) {
          v((c * gh + y) * gw + x) += spec.perturbation * n01(rng);
        }
        for (int py = y * cell; py < (y + 1) * cell; ++py) {
          for (int px = x * cell; px < (x + 1) * cell; ++px) mask.at(py, px) = 1;
        }
      }
    }
    writer.add("test/blob/" + stem(i), fre::Split::kTest, "blob", tensor(v), &mask);
  }
  writer.finish();
}

}  // namespace synthetic
