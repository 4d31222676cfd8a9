#include "fre/bundle.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>
#include <zlib.h>

#include "fre/error.hpp"
#include "json_io.hpp"

namespace fre {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'F', 'R', 'E', 'B'};
constexpr std::size_t kPreambleSize = 4 + 4 + 8;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
  return value;
}

void append_floats(std::string& payload, const float* data, std::size_t count) {
  payload.append(reinterpret_cast<const char*>(data), count * sizeof(float));
}

std::uint32_t crc_of(const unsigned char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for multi-GB payloads.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void ModelBundle::validate() const {
  if (fusion_layers.empty()) throw Error(ErrorCode::kConfig, "bundle has no fusion layers");
  for (const auto& id : fusion_layers) {
    if (!layers.contains(id)) throw Error(ErrorCode::kConfig, "fusion layer '" + id + "' has no model");
  }
  if (!layers.contains(score_layer)) {
    throw Error(ErrorCode::kConfig, "score layer '" + score_layer + "' has no model");
  }
  preprocess.validate();
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  bundle.validate();
  std::string blocks;
  json layers = json::array();
  for (const auto& [id, model] : bundle.layers) {
    const auto d = static_cast<std::size_t>(model.dim());
    const auto m = static_cast<std::size_t>(model.rank());
    json entry = {{"layer_id", id},
                  {"shape", {model.feature_shape.channels, model.feature_shape.height, model.feature_shape.width}},
                  {"dim", d},
                  {"rank", m},
                  {"variance_threshold", model.variance_threshold},
                  {"explained_variance", model.explained_variance}};
    entry["mean_offset"] = blocks.size();
    append_floats(blocks, model.mean.data(), d);
    entry["components_offset"] = blocks.size();
    append_floats(blocks, model.components.data(), m * d);
    entry["singular_values_offset"] = blocks.size();
    append_floats(blocks, model.singular_values.data(), m);
    layers.push_back(std::move(entry));
  }
  const json header = {{"format", "freb"},
                       {"version", ModelBundle::kFormatVersion},
                       {"backbone", bundle.backbone},
                       {"preprocess", preprocess_to_json(bundle.preprocess)},
                       {"map_options", map_options_to_json(bundle.map_options)},
                       {"fusion_layers", bundle.fusion_layers},
                       {"score_layer", bundle.score_layer},
                       {"payload_bytes", blocks.size()},
                       {"layers", layers}};
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, ModelBundle::kFormatVersion);
  put_le<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += blocks;
  const auto crc = crc_of(reinterpret_cast<const unsigned char*>(out.data()) + kPreambleSize,
                          out.size() - kPreambleSize);
  put_le<std::uint32_t>(out, crc);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::kIo, "cannot write bundle " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorCode::kIo, "write failed for bundle " + path.string());
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::kIo, "cannot open bundle " + path.string());
  const std::string raw((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());

  if (raw.size() < kPreambleSize || std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kCorrupt, "not a bundle file (bad magic): " + path.string());
  }
  const auto version = get_le<std::uint32_t>(bytes + 4);
  if (version != ModelBundle::kFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch, "bundle version " + std::to_string(version) + " unsupported (expected " +
                                                 std::to_string(ModelBundle::kFormatVersion) + ")");
  }
  const auto header_len = get_le<std::uint64_t>(bytes + 8);
  if (header_len > raw.size() - kPreambleSize) {
    throw Error(ErrorCode::kCorrupt, "bundle truncated inside header: " + path.string());
  }
  json header;
  try {
    header = json::parse(raw.begin() + kPreambleSize, raw.begin() + static_cast<std::ptrdiff_t>(kPreambleSize + header_len));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorrupt, std::string("bundle header is not valid JSON: ") + e.what());
  }

  try {
    const auto payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    const std::size_t payload_start = kPreambleSize + header_len;
    if (raw.size() != payload_start + payload_bytes + 4) {
      throw Error(ErrorCode::kCorrupt, "bundle size mismatch (truncated or padded): " + path.string());
    }
    const auto stored_crc = get_le<std::uint32_t>(bytes + payload_start + payload_bytes);
    if (crc_of(bytes + kPreambleSize, header_len + payload_bytes) != stored_crc) {
      throw Error(ErrorCode::kChecksum, "bundle CRC32 mismatch: " + path.string());
    }
    const unsigned char* payload = bytes + payload_start;
    auto read_floats = [&](std::size_t offset, std::size_t count, float* dst) {
      if (offset + count * sizeof(float) > payload_bytes) {
        throw Error(ErrorCode::kCorrupt, "bundle block exceeds payload");
      }
      std::memcpy(dst, payload + offset, count * sizeof(float));
    };

    ModelBundle bundle;
    bundle.backbone = header.at("backbone").get<std::string>();
    bundle.preprocess = preprocess_from_json(header.at("preprocess"));
    bundle.map_options = map_options_from_json(header.at("map_options"));
    bundle.fusion_layers = header.at("fusion_layers").get<std::vector<std::string>>();
    bundle.score_layer = header.at("score_layer").get<std::string>();
    for (const auto& entry : header.at("layers")) {
      SubspaceModel model;
      model.layer_id = entry.at("layer_id").get<std::string>();
      const auto shape = entry.at("shape").get<std::array<std::int64_t, 3>>();
      model.feature_shape = Shape3{shape[0], shape[1], shape[2]};
      const auto d = entry.at("dim").get<std::size_t>();
      const auto m = entry.at("rank").get<std::size_t>();
      if (d != model.feature_shape.size()) throw Error(ErrorCode::kCorrupt, "bundle layer dim/shape disagree");
      model.variance_threshold = entry.at("variance_threshold").get<double>();
      model.explained_variance = entry.at("explained_variance").get<double>();
      model.mean.resize(static_cast<Eigen::Index>(d));
      model.components.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
      model.singular_values.resize(static_cast<Eigen::Index>(m));
      read_floats(entry.at("mean_offset").get<std::size_t>(), d, model.mean.data());
      read_floats(entry.at("components_offset").get<std::size_t>(), m * d, model.components.data());
      read_floats(entry.at("singular_values_offset").get<std::size_t>(), m, model.singular_values.data());
      bundle.layers.emplace(model.layer_id, std::move(model));
    }
    bundle.validate();
    return bundle;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorrupt, std::string("bundle header missing fields: ") + e.what());
  }
}

}  // namespace fre
