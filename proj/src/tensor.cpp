#include "fre/tensor.hpp"

#include <cmath>
#include <sstream>

#include "fre/error.hpp"

namespace fre {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kMalformedHeader: return "malformed_header";
    case ErrorCode::kDtypeMismatch: return "dtype_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDegenerateData: return "degenerate_data";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kCorrupt: return "corrupt";
    case ErrorCode::kChecksum: return "checksum";
    case ErrorCode::kMissingLayer: return "missing_layer";
    case ErrorCode::kMissingMask: return "missing_mask";
    case ErrorCode::kEmptySplit: return "empty_split";
    case ErrorCode::kUnsupportedFile: return "unsupported_file";
    case ErrorCode::kDecode: return "decode";
    case ErrorCode::kSingleClass: return "single_class";
    case ErrorCode::kBackbone: return "backbone";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

std::string Shape3::str() const {
  std::ostringstream os;
  os << "(" << channels << ", " << height << ", " << width << ")";
  return os.str();
}

FeatureTensor::FeatureTensor(std::string layer_id, Shape3 shape, std::vector<float> data)
    : layer_id_(std::move(layer_id)), shape_(shape), data_(std::move(data)) {
  if (!shape_.valid()) {
    throw Error(ErrorCode::kShapeMismatch, "feature tensor shape must be positive, got " + shape_.str());
  }
  if (data_.size() != shape_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "feature tensor " + shape_.str() + " needs " + std::to_string(shape_.size()) +
                    " elements, got " + std::to_string(data_.size()));
  }
}

void FeatureTensor::check_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite, "feature tensor '" + layer_id_ + "' contains non-finite values");
    }
  }
}

FeatureBatch::FeatureBatch(std::string layer_id, Shape3 shape, RowMatrixF rows)
    : layer_id_(std::move(layer_id)), shape_(shape), rows_(std::move(rows)) {
  if (!shape_.valid() || static_cast<std::size_t>(rows_.cols()) != shape_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "batch row length " + std::to_string(rows_.cols()) +
                                               " does not match shape " + shape_.str());
  }
  if (rows_.rows() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "a feature batch needs at least two samples");
  }
}

FeatureBatch FeatureBatch::stack(std::span<const FeatureTensor> tensors) {
  if (tensors.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "cannot stack an empty tensor list");
  }
  const auto& first = tensors.front();
  RowMatrixF rows(static_cast<Eigen::Index>(tensors.size()), static_cast<Eigen::Index>(first.shape().size()));
  for (std::size_t r = 0; r < tensors.size(); ++r) {
    const auto& t = tensors[r];
    if (t.shape() != first.shape() || t.layer_id() != first.layer_id()) {
      throw Error(ErrorCode::kShapeMismatch, "feature shape drift in layer '" + first.layer_id() + "': " +
                                                 first.shape().str() + " vs " + t.shape().str());
    }
    auto src = t.data();
    std::copy(src.begin(), src.end(), rows.row(static_cast<Eigen::Index>(r)).data());
  }
  return FeatureBatch(first.layer_id(), first.shape(), std::move(rows));
}

std::vector<float> vectorize(const FeatureTensor& t) {
  auto d = t.data();
  return {d.begin(), d.end()};
}

FeatureTensor devectorize(std::span<const float> row, const Shape3& shape, std::string layer_id) {
  return FeatureTensor(std::move(layer_id), shape, std::vector<float>(row.begin(), row.end()));
}

}  // namespace fre
