#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fre/backbone.hpp"
#include "fre/onnx_writer.hpp"

namespace fre {

// Self-contained conv/ReLU backbone with deterministic weights, used to run
// the live inference path without any pretrained download. Every stage is a
// 3x3 convolution (padding 1) followed by ReLU.
struct ConvStageSpec {
  std::string name;
  std::int64_t out_channels = 0;
  std::int64_t stride = 1;
  bool tapped = false;
};

struct FixtureSpec {
  std::string name = "fixture";
  std::int64_t input_size = 256;
  std::vector<ConvStageSpec> stages;
  std::uint32_t seed = 7;
};

struct ConvWeights {
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  std::int64_t stride = 1;
  std::vector<float> weight;  // (out, in, 3, 3)
  std::vector<float> bias;    // (out)
};

// Two convolutions at 32x32 with taps `layer1` (4x32x32) and `layer2` (8x16x16).
FixtureSpec tiny_fixture();

// Six convolutions on a 256x256 input with taps layer1..layer3 at
// 32x32x32, 64x16x16 and 128x8x8: compute-heavy relative to its taps, like
// the stage boundaries of a real classification backbone.
FixtureSpec bench_fixture();

std::vector<ConvWeights> fixture_weights(const FixtureSpec& spec);
onnx::Graph fixture_graph(const FixtureSpec& spec);

// Writes `<dir>/<name>.onnx` and `<dir>/taps.json`; returns the manifest.
BackboneSpec write_fixture(const FixtureSpec& spec, const std::filesystem::path& dir);

// Category tree in the MVTec layout: striped textures as "good" images and
// solid colour patches as the "patch" defect, with ground-truth masks.
struct SyntheticDatasetSpec {
  int size = 64;
  int train_good = 20;
  int test_good = 8;
  int test_defect = 8;
  std::uint32_t seed = 3;
};

void write_synthetic_dataset(const SyntheticDatasetSpec& spec, const std::filesystem::path& root);

}  // namespace fre
