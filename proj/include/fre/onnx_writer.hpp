#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fre::onnx {

// Minimal ONNX ModelProto encoder: enough to emit small static-shape float
// graphs (initializers, nodes with int/ints/float attributes, typed I/O).

struct Attribute {
  std::string name;
  enum class Kind { kInt, kInts, kFloat } kind = Kind::kInt;
  std::int64_t i = 0;
  std::vector<std::int64_t> ints;
  float f = 0.0f;

  static Attribute make_int(std::string name, std::int64_t v);
  static Attribute make_ints(std::string name, std::vector<std::int64_t> v);
  static Attribute make_float(std::string name, float v);
};

struct Node {
  std::string op_type;
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<Attribute> attributes;
};

struct Initializer {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<float> values;
};

struct ValueInfo {
  std::string name;
  std::vector<std::int64_t> dims;
};

struct Graph {
  std::string name = "graph";
  std::vector<Node> nodes;
  std::vector<Initializer> initializers;
  std::vector<ValueInfo> inputs;
  std::vector<ValueInfo> outputs;
  std::int64_t opset = 11;
};

std::string encode_model(const Graph& graph);
void write_model(const Graph& graph, const std::filesystem::path& path);

// Replaces Identity nodes whose input is an initializer with a renamed copy of
// that initializer. PyTorch emits such nodes for deduplicated weights and the
// OpenCV 4.5 importer rejects them. Returns `model` unchanged when there are
// none. Errors: kBackbone on malformed protobuf.
std::string fold_constant_identities(const std::string& model);

}  // namespace fre::onnx
