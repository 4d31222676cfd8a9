#include "fre/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fre/dataset.hpp"
#include "fre/error.hpp"

namespace fs = std::filesystem;

namespace fre {

FixtureSpec tiny_fixture() {
  FixtureSpec spec;
  spec.name = "tiny";
  spec.input_size = 32;
  spec.stages = {{"layer1", 4, 1, true}, {"layer2", 8, 2, true}};
  spec.seed = 11;
  return spec;
}

FixtureSpec bench_fixture() {
  FixtureSpec spec;
  spec.name = "fixture";
  spec.input_size = 256;
  spec.stages = {{"stem1", 32, 1, false}, {"stem2", 32, 2, false}, {"stem3", 32, 2, false},
                 {"layer1", 32, 2, true}, {"layer2", 64, 2, true},  {"layer3", 128, 2, true}};
  spec.seed = 7;
  return spec;
}

std::vector<ConvWeights> fixture_weights(const FixtureSpec& spec) {
  // Raw mt19937 draws rather than <random> distributions, whose output is
  // implementation-defined; the weights must not depend on the standard library.
  std::mt19937 rng(spec.seed);
  auto uniform = [&rng]() { return static_cast<double>(rng()) / 4294967296.0 * 2.0 - 1.0; };
  std::vector<ConvWeights> out;
  std::int64_t in_channels = 3;
  for (const auto& stage : spec.stages) {
    ConvWeights w;
    w.in_channels = in_channels;
    w.out_channels = stage.out_channels;
    w.stride = stage.stride;
    const double bound = std::sqrt(6.0 / static_cast<double>(in_channels * 9));
    w.weight.resize(static_cast<std::size_t>(stage.out_channels * in_channels * 9));
    for (auto& v : w.weight) v = static_cast<float>(bound * uniform());
    w.bias.resize(static_cast<std::size_t>(stage.out_channels));
    for (auto& v : w.bias) v = static_cast<float>(0.05 * uniform());
    out.push_back(std::move(w));
    in_channels = stage.out_channels;
  }
  return out;
}

onnx::Graph fixture_graph(const FixtureSpec& spec) {
  if (spec.stages.empty()) throw Error(ErrorCode::kInvalidArgument, "fixture needs at least one stage");
  const auto weights = fixture_weights(spec);
  onnx::Graph g;
  g.name = spec.name;
  g.inputs.push_back({"input", {1, 3, spec.input_size, spec.input_size}});
  std::string previous = "input";
  std::int64_t size = spec.input_size;
  for (std::size_t k = 0; k < spec.stages.size(); ++k) {
    const auto& stage = spec.stages[k];
    const auto& w = weights[k];
    const std::string weight_name = stage.name + ".weight";
    const std::string bias_name = stage.name + ".bias";
    const std::string conv_out = stage.name + ".conv";
    g.initializers.push_back({weight_name, {w.out_channels, w.in_channels, 3, 3}, w.weight});
    g.initializers.push_back({bias_name, {w.out_channels}, w.bias});
    g.nodes.push_back({"Conv", stage.name + "/Conv", {previous, weight_name, bias_name}, {conv_out},
                       {onnx::Attribute::make_ints("kernel_shape", {3, 3}),
                        onnx::Attribute::make_ints("strides", {stage.stride, stage.stride}),
                        onnx::Attribute::make_ints("pads", {1, 1, 1, 1})}});
    g.nodes.push_back({"Relu", stage.name + "/Relu", {conv_out}, {stage.name}, {}});
    size = (size + 2 - 3) / stage.stride + 1;
    previous = stage.name;
    if (stage.tapped || k + 1 == spec.stages.size()) {
      g.outputs.push_back({stage.name, {1, stage.out_channels, size, size}});
    }
  }
  return g;
}

BackboneSpec write_fixture(const FixtureSpec& spec, const fs::path& dir) {
  fs::create_directories(dir);
  const auto graph = fixture_graph(spec);
  BackboneSpec out;
  out.name = spec.name;
  out.onnx_path = dir / (spec.name + ".onnx");
  out.input_name = "input";
  out.input_shape = {1, 3, spec.input_size, spec.input_size};
  out.opset = graph.opset;
  for (const auto& v : graph.outputs) {
    for (const auto& stage : spec.stages) {
      if (stage.name == v.name && stage.tapped) {
        out.taps.push_back({spec.name + "/" + stage.name, stage.name, Shape3{v.dims[1], v.dims[2], v.dims[3]}});
      }
    }
  }
  onnx::write_model(graph, out.onnx_path);
  out.write_manifest(dir / "taps.json");
  return out;
}

namespace {

Image striped_texture(int size, std::mt19937& rng) {
  auto unit = [&rng]() { return static_cast<double>(rng()) / 4294967296.0; };
  const double phase = unit() * 6.283185307179586;
  const double angle = (unit() - 0.5) * 0.4;
  const double period = 6.0 + 2.0 * unit();
  Image img;
  img.height = size;
  img.width = size;
  img.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double t = (j * std::cos(angle) + i * std::sin(angle)) * 6.283185307179586 / period + phase;
      const double v = 110.0 + 40.0 * std::sin(t) + 6.0 * (unit() - 0.5);
      auto* px = &img.rgb[(static_cast<std::size_t>(i) * size + j) * 3];
      px[0] = static_cast<std::uint8_t>(std::lround(v));
      px[1] = static_cast<std::uint8_t>(std::lround(v * 0.9));
      px[2] = static_cast<std::uint8_t>(std::lround(v * 0.8));
    }
  }
  return img;
}

Mask paint_patch(Image& img, std::mt19937& rng) {
  auto unit = [&rng]() { return static_cast<double>(rng()) / 4294967296.0; };
  const int side = std::max(2, static_cast<int>(img.height * (0.12 + 0.08 * unit())));
  const int top = static_cast<int>(unit() * (img.height - side));
  const int left = static_cast<int>(unit() * (img.width - side));
  const std::uint8_t colour[3] = {static_cast<std::uint8_t>(200 + 55 * unit()), 30, static_cast<std::uint8_t>(60 * unit())};
  Mask mask(img.height, img.width);
  for (int i = top; i < top + side; ++i) {
    for (int j = left; j < left + side; ++j) {
      auto* px = &img.rgb[(static_cast<std::size_t>(i) * img.width + j) * 3];
      px[0] = colour[0];
      px[1] = colour[1];
      px[2] = colour[2];
      mask.at(i, j) = 1;
    }
  }
  return mask;
}

std::string stem(int index) {
  std::string s = std::to_string(index);
  return std::string(3 - std::min<std::size_t>(3, s.size()), '0') + s;
}

}  // namespace

void write_synthetic_dataset(const SyntheticDatasetSpec& spec, const fs::path& root) {
  if (spec.size < 8 || spec.train_good < 2 || spec.test_good < 1 || spec.test_defect < 1) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic dataset needs size >= 8 and nonempty splits");
  }
  std::mt19937 rng(spec.seed);
  fs::create_directories(root / "train" / "good");
  fs::create_directories(root / "test" / "good");
  fs::create_directories(root / "test" / "patch");
  fs::create_directories(root / "ground_truth" / "patch");
  for (int k = 0; k < spec.train_good; ++k) {
    save_image(striped_texture(spec.size, rng), root / "train" / "good" / (stem(k) + ".png"));
  }
  for (int k = 0; k < spec.test_good; ++k) {
    save_image(striped_texture(spec.size, rng), root / "test" / "good" / (stem(k) + ".png"));
  }
  for (int k = 0; k < spec.test_defect; ++k) {
    Image img = striped_texture(spec.size, rng);
    const Mask mask = paint_patch(img, rng);
    save_image(img, root / "test" / "patch" / (stem(k) + ".png"));
    save_mask_png(mask, root / "ground_truth" / "patch" / (stem(k) + "_mask.png"));
  }
}

}  // namespace fre
