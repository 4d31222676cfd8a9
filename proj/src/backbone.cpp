#include "fre/backbone.hpp"

#include <fstream>
#include <iterator>
#include <mutex>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "fre/error.hpp"
#include "fre/onnx_writer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fre {

BackboneSpec BackboneSpec::from_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::kIo, "cannot open tap manifest " + manifest.string());
  try {
    const json j = json::parse(in);
    BackboneSpec spec;
    spec.name = j.at("backbone").get<std::string>();
    spec.onnx_path = j.at("onnx").get<std::string>();
    if (spec.onnx_path.is_relative()) spec.onnx_path = manifest.parent_path() / spec.onnx_path;
    spec.opset = j.value("opset", std::int64_t{11});
    spec.input_name = j.at("input").at("name").get<std::string>();
    spec.input_shape = j.at("input").at("shape").get<std::array<std::int64_t, 4>>();
    for (const auto& t : j.at("taps")) {
      const auto shape = t.at("shape").get<std::array<std::int64_t, 3>>();
      spec.taps.push_back({t.at("id").get<std::string>(), t.at("output").get<std::string>(),
                           Shape3{shape[0], shape[1], shape[2]}});
    }
    if (j.contains("normalization")) {
      spec.norm_mean = j.at("normalization").at("mean").get<std::array<float, 3>>();
      spec.norm_std = j.at("normalization").at("std").get<std::array<float, 3>>();
    }
    if (spec.taps.empty()) throw Error(ErrorCode::kConfig, "tap manifest lists no taps: " + manifest.string());
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, "malformed tap manifest " + manifest.string() + ": " + e.what());
  }
}

void BackboneSpec::write_manifest(const fs::path& manifest) const {
  json taps_json = json::array();
  for (const auto& t : taps) {
    taps_json.push_back({{"id", t.layer_id}, {"output", t.output},
                         {"shape", {t.shape.channels, t.shape.height, t.shape.width}}});
  }
  fs::path onnx = onnx_path;
  if (onnx.parent_path() == manifest.parent_path()) onnx = onnx.filename();
  json j = {{"backbone", name},
            {"onnx", onnx.string()},
            {"opset", opset},
            {"input", {{"name", input_name}, {"shape", input_shape}}},
            {"taps", taps_json}};
  if (norm_mean && norm_std) j["normalization"] = {{"mean", *norm_mean}, {"std", *norm_std}};
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write tap manifest " + manifest.string());
  out << j.dump(2) << "\n";
}

const TapSpec& BackboneSpec::tap(const std::string& layer_id) const {
  for (const auto& t : taps) {
    if (t.layer_id == layer_id) return t;
  }
  throw Error(ErrorCode::kMissingLayer, "backbone '" + name + "' has no tap '" + layer_id + "'");
}

std::vector<std::string> BackboneSpec::layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& t : taps) ids.push_back(t.layer_id);
  return ids;
}

PreprocessConfig BackboneSpec::preprocess_defaults() const {
  PreprocessConfig p;
  p.target_height = static_cast<int>(input_shape[2]);
  p.target_width = static_cast<int>(input_shape[3]);
  if (norm_mean) p.mean = *norm_mean;
  if (norm_std) p.std = *norm_std;
  return p;
}

struct Backbone::Impl {
  BackboneSpec spec;
  cv::dnn::Net net;
  std::vector<cv::String> outputs;
  std::mutex mutex;

  std::vector<cv::Mat> run(const FeatureTensor& input) {
    const auto& s = spec.input_shape;
    const int dims[] = {1, static_cast<int>(s[1]), static_cast<int>(s[2]), static_cast<int>(s[3])};
    cv::Mat blob(4, dims, CV_32F, const_cast<float*>(input.data().data()));
    std::vector<cv::Mat> out;
    std::lock_guard lock(mutex);
    try {
      net.setInput(blob, spec.input_name);
      net.forward(out, outputs);
    } catch (const cv::Exception& e) {
      throw Error(ErrorCode::kBackbone, std::string("backbone forward failed: ") + e.what());
    }
    // Outputs alias the network's internal buffers; detach before unlocking.
    for (auto& m : out) m = m.clone();
    return out;
  }
};

Backbone::Backbone(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Backbone::Backbone(Backbone&&) noexcept = default;
Backbone& Backbone::operator=(Backbone&&) noexcept = default;
Backbone::~Backbone() = default;

const BackboneSpec& Backbone::spec() const { return impl_->spec; }

Backbone Backbone::load(const BackboneSpec& spec) {
  auto impl = std::make_unique<Impl>();
  impl->spec = spec;
  if (!fs::is_regular_file(spec.onnx_path)) {
    throw Error(ErrorCode::kBackbone, "ONNX file not found: " + spec.onnx_path.string());
  }
  try {
    std::ifstream in(spec.onnx_path, std::ios::binary);
    const std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto model = onnx::fold_constant_identities(raw);
    impl->net = cv::dnn::readNetFromONNX(model.data(), model.size());
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::kBackbone, "cannot load ONNX graph " + spec.onnx_path.string() +
                                          " (unsupported operator or malformed file): " + e.what());
  }
  if (impl->net.empty()) throw Error(ErrorCode::kBackbone, "ONNX graph is empty: " + spec.onnx_path.string());
  impl->net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
  impl->net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
  for (const auto& t : spec.taps) {
    if (impl->net.getLayerId(t.output) < 0) {
      throw Error(ErrorCode::kBackbone, "tap '" + t.layer_id + "' names tensor '" + t.output +
                                            "' which does not exist in " + spec.onnx_path.string());
    }
    impl->outputs.push_back(t.output);
  }

  // Probe once so declared tap shapes are checked up front.
  const auto& s = spec.input_shape;
  if (s[0] != 1 || s[1] != 3 || s[2] < 1 || s[3] < 1) {
    throw Error(ErrorCode::kBackbone, "backbone input must be (1, 3, H, W)");
  }
  const FeatureTensor zeros("input", Shape3{3, s[2], s[3]}, std::vector<float>(static_cast<std::size_t>(3 * s[2] * s[3]), 0.0f));
  const auto probe = impl->run(zeros);
  for (std::size_t k = 0; k < spec.taps.size(); ++k) {
    const auto& m = probe[k];
    const auto& want = spec.taps[k].shape;
    const bool ok = m.dims == 4 && m.size[0] == 1 && m.size[1] == want.channels && m.size[2] == want.height &&
                    m.size[3] == want.width;
    if (!ok) {
      std::string got = "(";
      for (int d = 0; d < m.dims; ++d) got += (d ? ", " : "") + std::to_string(m.size[d]);
      throw Error(ErrorCode::kBackbone, "tap '" + spec.taps[k].layer_id + "' declared " + want.str() +
                                            " but the graph produces " + got + ")");
    }
  }
  return Backbone(std::move(impl));
}

std::map<std::string, FeatureTensor> Backbone::forward(const FeatureTensor& input) const {
  const auto& s = impl_->spec.input_shape;
  if (input.shape() != Shape3{s[1], s[2], s[3]}) {
    throw Error(ErrorCode::kShapeMismatch, "backbone expects input " + Shape3{s[1], s[2], s[3]}.str() + ", got " +
                                               input.shape().str());
  }
  const auto outs = impl_->run(input);
  std::map<std::string, FeatureTensor> features;
  for (std::size_t k = 0; k < outs.size(); ++k) {
    const auto& tap = impl_->spec.taps[k];
    const auto* begin = outs[k].ptr<float>();
    features.emplace(tap.layer_id, FeatureTensor(tap.layer_id, tap.shape, std::vector<float>(begin, begin + tap.shape.size())));
  }
  return features;
}

void set_inference_threads(int threads) { cv::setNumThreads(threads); }

}  // namespace fre
