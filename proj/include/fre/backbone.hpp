#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fre/options.hpp"
#include "fre/tensor.hpp"

namespace fre {

// One tapped intermediate output: `layer_id` follows `<backbone>/<stage>`,
// `output` is the graph tensor name.
struct TapSpec {
  std::string layer_id;
  std::string output;
  Shape3 shape;

  friend bool operator==(const TapSpec&, const TapSpec&) = default;
};

/// Contents of a tap manifest (`taps.json`) written next to an ONNX graph.
struct BackboneSpec {
  std::string name;
  std::filesystem::path onnx_path;
  std::string input_name = "input";
  std::array<std::int64_t, 4> input_shape{1, 3, 256, 256};
  std::int64_t opset = 11;
  std::vector<TapSpec> taps;
  // Normalization the backbone expects, when the manifest declares one.
  std::optional<std::array<float, 3>> norm_mean;
  std::optional<std::array<float, 3>> norm_std;

  // Relative `onnx` paths resolve against the manifest's directory.
  static BackboneSpec from_manifest(const std::filesystem::path& manifest);
  void write_manifest(const std::filesystem::path& manifest) const;

  const TapSpec& tap(const std::string& layer_id) const;
  std::vector<std::string> layer_ids() const;
  PreprocessConfig preprocess_defaults() const;
};

/// Loaded ONNX graph executed on the CPU. The handle is shareable across
/// threads; forward calls on one handle are serialized internally.
class Backbone {
 public:
  // Errors (all kBackbone): unreadable/unsupported graph, tap output missing
  // from the graph, declared tap shape different from the produced one.
  static Backbone load(const BackboneSpec& spec);

  Backbone(Backbone&&) noexcept;
  Backbone& operator=(Backbone&&) noexcept;
  ~Backbone();

  const BackboneSpec& spec() const;

  // input: (3, H, W) matching the declared input shape.
  std::map<std::string, FeatureTensor> forward(const FeatureTensor& input) const;

 private:
  struct Impl;
  explicit Backbone(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

// Worker threads used by the inference runtime (1 = deterministic latency).
void set_inference_threads(int threads);

}  // namespace fre
