#include "fre/onnx_writer.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string_view>

#include "fre/error.hpp"

namespace fre::onnx {
namespace {

// Protobuf wire types.
constexpr int kVarint = 0;
constexpr int kFixed32 = 5;
constexpr int kLengthDelimited = 2;

// ONNX enum values.
constexpr std::int64_t kAttrFloat = 1;
constexpr std::int64_t kAttrInt = 2;
constexpr std::int64_t kAttrInts = 7;
constexpr std::int64_t kTensorFloat = 1;
constexpr std::int64_t kIrVersion = 7;

class Writer {
 public:
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      buf_.push_back(static_cast<char>((v & 0x7f) | 0x80));
      v >>= 7;
    }
    buf_.push_back(static_cast<char>(v));
  }
  void tag(int field, int wire) { varint(static_cast<std::uint64_t>(field) << 3 | static_cast<std::uint64_t>(wire)); }
  void int_field(int field, std::int64_t v) {
    tag(field, kVarint);
    varint(static_cast<std::uint64_t>(v));
  }
  void float_field(int field, float v) {
    tag(field, kFixed32);
    char bytes[4];
    std::memcpy(bytes, &v, 4);
    buf_.append(bytes, 4);
  }
  void bytes_field(int field, const std::string& s) {
    tag(field, kLengthDelimited);
    varint(s.size());
    buf_ += s;
  }
  void message_field(int field, const Writer& nested) { bytes_field(field, nested.buf_); }
  void raw(std::string_view bytes) { buf_.append(bytes.data(), bytes.size()); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

Writer encode_attribute(const Attribute& a) {
  Writer w;
  w.bytes_field(1, a.name);
  switch (a.kind) {
    case Attribute::Kind::kFloat:
      w.float_field(2, a.f);
      w.int_field(20, kAttrFloat);
      break;
    case Attribute::Kind::kInt:
      w.int_field(3, a.i);
      w.int_field(20, kAttrInt);
      break;
    case Attribute::Kind::kInts:
      for (auto v : a.ints) w.int_field(8, v);
      w.int_field(20, kAttrInts);
      break;
  }
  return w;
}

Writer encode_node(const Node& n) {
  Writer w;
  for (const auto& in : n.inputs) w.bytes_field(1, in);
  for (const auto& out : n.outputs) w.bytes_field(2, out);
  w.bytes_field(3, n.name);
  w.bytes_field(4, n.op_type);
  for (const auto& a : n.attributes) w.message_field(5, encode_attribute(a));
  return w;
}

Writer encode_tensor(const Initializer& t) {
  Writer w;
  for (auto d : t.dims) w.int_field(1, d);
  w.int_field(2, kTensorFloat);
  w.bytes_field(8, t.name);
  w.bytes_field(9, std::string(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(float)));
  return w;
}

Writer encode_value_info(const ValueInfo& v) {
  Writer shape;
  for (auto d : v.dims) {
    Writer dim;
    dim.int_field(1, d);
    shape.message_field(1, dim);
  }
  Writer tensor_type;
  tensor_type.int_field(1, kTensorFloat);
  tensor_type.message_field(2, shape);
  Writer type;
  type.message_field(1, tensor_type);
  Writer w;
  w.bytes_field(1, v.name);
  w.message_field(2, type);
  return w;
}

// One top-level field of a serialized message.
struct WireField {
  int number = 0;
  int wire = 0;
  std::string_view whole;    // tag and payload, for verbatim copies
  std::string_view payload;  // length-delimited contents
};

std::uint64_t read_varint(std::string_view bytes, std::size_t& pos) {
  std::uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (pos >= bytes.size()) throw Error(ErrorCode::kBackbone, "truncated protobuf varint in ONNX model");
    const auto b = static_cast<std::uint8_t>(bytes[pos++]);
    v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
    if ((b & 0x80) == 0) return v;
  }
  throw Error(ErrorCode::kBackbone, "overlong protobuf varint in ONNX model");
}

std::vector<WireField> read_fields(std::string_view bytes) {
  std::vector<WireField> fields;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t start = pos;
    const auto key = read_varint(bytes, pos);
    WireField f;
    f.number = static_cast<int>(key >> 3);
    f.wire = static_cast<int>(key & 7);
    std::size_t size = 0;
    switch (f.wire) {
      case kVarint:
        read_varint(bytes, pos);
        break;
      case 1:
        size = 8;
        break;
      case kLengthDelimited:
        size = static_cast<std::size_t>(read_varint(bytes, pos));
        break;
      case kFixed32:
        size = 4;
        break;
      default:
        throw Error(ErrorCode::kBackbone, "unsupported protobuf wire type in ONNX model");
    }
    if (size > bytes.size() - pos) throw Error(ErrorCode::kBackbone, "truncated protobuf field in ONNX model");
    f.payload = bytes.substr(pos, size);
    pos += size;
    f.whole = bytes.substr(start, pos - start);
    fields.push_back(f);
  }
  return fields;
}

// First string-valued field `number`, if any.
std::optional<std::string_view> string_field(std::string_view message, int number) {
  for (const auto& f : read_fields(message)) {
    if (f.number == number && f.wire == kLengthDelimited) return f.payload;
  }
  return std::nullopt;
}

}  // namespace

std::string fold_constant_identities(const std::string& model) {
  // ModelProto.graph = 7; GraphProto.node = 1, initializer = 5; NodeProto.input = 1,
  // output = 2, op_type = 4; TensorProto.name = 8.
  const auto model_fields = read_fields(model);
  std::optional<std::string_view> graph;
  for (const auto& f : model_fields) {
    if (f.number == 7 && f.wire == kLengthDelimited) graph = f.payload;
  }
  if (!graph) return model;

  const auto graph_fields = read_fields(*graph);
  std::map<std::string, std::string_view, std::less<>> initializers;
  for (const auto& f : graph_fields) {
    if (f.number != 5 || f.wire != kLengthDelimited) continue;
    if (const auto name = string_field(f.payload, 8)) initializers.emplace(std::string(*name), f.payload);
  }

  std::vector<bool> dropped(graph_fields.size(), false);
  std::vector<std::pair<std::string, std::string_view>> aliases;  // new name, source tensor
  for (std::size_t k = 0; k < graph_fields.size(); ++k) {
    const auto& f = graph_fields[k];
    if (f.number != 1 || f.wire != kLengthDelimited) continue;
    std::vector<std::string_view> inputs;
    std::vector<std::string_view> outputs;
    std::string_view op;
    for (const auto& nf : read_fields(f.payload)) {
      if (nf.wire != kLengthDelimited) continue;
      if (nf.number == 1) inputs.push_back(nf.payload);
      if (nf.number == 2) outputs.push_back(nf.payload);
      if (nf.number == 4) op = nf.payload;
    }
    if (op != "Identity" || inputs.size() != 1 || outputs.size() != 1) continue;
    const auto it = initializers.find(inputs[0]);
    if (it == initializers.end()) continue;
    dropped[k] = true;
    aliases.emplace_back(std::string(outputs[0]), it->second);
    initializers.emplace(std::string(outputs[0]), it->second);
  }
  if (aliases.empty()) return model;

  Writer g;
  for (std::size_t k = 0; k < graph_fields.size(); ++k) {
    if (!dropped[k]) g.raw(graph_fields[k].whole);
  }
  for (const auto& [name, tensor] : aliases) {
    Writer t;
    for (const auto& tf : read_fields(tensor)) {
      if (tf.number != 8) t.raw(tf.whole);
    }
    t.bytes_field(8, name);
    g.message_field(5, t);
  }
  Writer out;
  for (const auto& f : model_fields) {
    if (f.number == 7 && f.wire == kLengthDelimited) {
      out.message_field(7, g);
    } else {
      out.raw(f.whole);
    }
  }
  return out.str();
}

Attribute Attribute::make_int(std::string name, std::int64_t v) {
  Attribute a;
  a.name = std::move(name);
  a.kind = Kind::kInt;
  a.i = v;
  return a;
}

Attribute Attribute::make_ints(std::string name, std::vector<std::int64_t> v) {
  Attribute a;
  a.name = std::move(name);
  a.kind = Kind::kInts;
  a.ints = std::move(v);
  return a;
}

Attribute Attribute::make_float(std::string name, float v) {
  Attribute a;
  a.name = std::move(name);
  a.kind = Kind::kFloat;
  a.f = v;
  return a;
}

std::string encode_model(const Graph& graph) {
  Writer g;
  for (const auto& n : graph.nodes) g.message_field(1, encode_node(n));
  g.bytes_field(2, graph.name);
  for (const auto& t : graph.initializers) g.message_field(5, encode_tensor(t));
  for (const auto& v : graph.inputs) g.message_field(11, encode_value_info(v));
  for (const auto& v : graph.outputs) g.message_field(12, encode_value_info(v));

  Writer opset;
  opset.bytes_field(1, "");
  opset.int_field(2, graph.opset);

  Writer model;
  model.int_field(1, kIrVersion);
  model.bytes_field(2, "fre-fixture");
  model.message_field(7, g);
  model.message_field(8, opset);
  return model.str();
}

void write_model(const Graph& graph, const std::filesystem::path& path) {
  const auto bytes = encode_model(graph);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace fre::onnx
