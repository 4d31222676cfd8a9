#include "fre/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include "fre/error.hpp"

namespace fre {
namespace {

static_assert(std::endian::native == std::endian::little, "NPY payloads are read as native little-endian");

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

std::string shape_tuple(std::span<const std::int64_t> shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ",";
  os << ")";
  return os.str();
}

std::vector<std::int64_t> parse_shape(const std::string& tuple, const std::filesystem::path& path) {
  std::vector<std::int64_t> shape;
  std::string token;
  for (char ch : tuple) {
    if (ch == ',' || ch == ' ') {
      if (!token.empty()) shape.push_back(std::stoll(token));
      token.clear();
    } else if (ch >= '0' && ch <= '9') {
      token += ch;
    } else if (ch != 'L') {
      throw Error(ErrorCode::kMalformedHeader, "bad shape tuple in " + path.string());
    }
  }
  if (!token.empty()) shape.push_back(std::stoll(token));
  return shape;
}

std::int64_t element_count(std::span<const std::int64_t> shape) {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace

std::string npy_header(std::span<const std::int64_t> shape) {
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape_tuple(shape) + ", }";
  // magic(6) + version(2) + header_len(2) + dict + padding + '\n' aligned to 64
  std::size_t total = kMagicLen + 2 + 2 + dict.size() + 1;
  std::size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict.push_back('\n');

  std::string out(kMagic, kMagicLen);
  out.push_back('\x01');
  out.push_back('\x00');
  auto len = static_cast<std::uint16_t>(dict.size());
  out.push_back(static_cast<char>(len & 0xff));
  out.push_back(static_cast<char>(len >> 8));
  out += dict;
  return out;
}

NpyArray read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());

  char magic[kMagicLen + 2];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw Error(ErrorCode::kMalformedHeader, "bad NPY magic in " + path.string());
  }
  const int major = static_cast<unsigned char>(magic[kMagicLen]);
  std::size_t header_len = 0;
  if (major == 1) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) throw Error(ErrorCode::kMalformedHeader, "short NPY header");
    header_len = b[0] | (static_cast<std::size_t>(b[1]) << 8);
  } else if (major == 2 || major == 3) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorCode::kMalformedHeader, "short NPY header");
    header_len = b[0] | (static_cast<std::size_t>(b[1]) << 8) | (static_cast<std::size_t>(b[2]) << 16) |
                 (static_cast<std::size_t>(b[3]) << 24);
  } else {
    throw Error(ErrorCode::kMalformedHeader, "unsupported NPY version " + std::to_string(major) + " in " +
                                                 path.string());
  }
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
    throw Error(ErrorCode::kMalformedHeader, "short NPY header in " + path.string());
  }

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex order_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m;
  if (!std::regex_search(header, m, descr_re)) {
    throw Error(ErrorCode::kMalformedHeader, "NPY header lacks descr in " + path.string());
  }
  const std::string descr = m[1];
  if (descr != "<f4") {
    throw Error(ErrorCode::kDtypeMismatch, "expected dtype '<f4', found '" + descr + "' in " + path.string());
  }
  if (!std::regex_search(header, m, order_re)) {
    throw Error(ErrorCode::kMalformedHeader, "NPY header lacks fortran_order in " + path.string());
  }
  if (m[1] == "True") {
    throw Error(ErrorCode::kMalformedHeader, "Fortran-order arrays are not supported: " + path.string());
  }
  if (!std::regex_search(header, m, shape_re)) {
    throw Error(ErrorCode::kMalformedHeader, "NPY header lacks shape in " + path.string());
  }

  NpyArray arr;
  arr.shape = parse_shape(m[1], path);
  const auto count = element_count(arr.shape);
  arr.data.resize(static_cast<std::size_t>(count));
  const auto bytes = static_cast<std::streamsize>(count * sizeof(float));
  in.read(reinterpret_cast<char*>(arr.data.data()), bytes);
  if (in.gcount() != bytes) {
    throw Error(ErrorCode::kTruncated, "NPY payload truncated in " + path.string() + ": expected " +
                                           std::to_string(bytes) + " bytes, got " + std::to_string(in.gcount()));
  }
  return arr;
}

void write_npy(const std::filesystem::path& path, std::span<const std::int64_t> shape, std::span<const float> data) {
  if (element_count(shape) != static_cast<std::int64_t>(data.size())) {
    throw Error(ErrorCode::kShapeMismatch, "NPY shape does not match payload size");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  const auto header = npy_header(shape);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

FeatureTensor load_feature_tensor(const std::filesystem::path& path, std::string layer_id) {
  auto arr = read_npy(path);
  if (arr.shape.size() == 4 && arr.shape[0] == 1) arr.shape.erase(arr.shape.begin());
  if (arr.shape.size() != 3) {
    throw Error(ErrorCode::kShapeMismatch, "expected a (C, H, W) array in " + path.string());
  }
  FeatureTensor t(std::move(layer_id), Shape3{arr.shape[0], arr.shape[1], arr.shape[2]}, std::move(arr.data));
  t.check_finite();
  return t;
}

FeatureBatch load_feature_batch(const std::filesystem::path& path, std::string layer_id) {
  auto arr = read_npy(path);
  if (arr.shape.size() != 4) {
    throw Error(ErrorCode::kShapeMismatch, "expected an (M, C, H, W) array in " + path.string());
  }
  const Shape3 shape{arr.shape[1], arr.shape[2], arr.shape[3]};
  RowMatrixF rows = Eigen::Map<RowMatrixF>(arr.data.data(), arr.shape[0], static_cast<Eigen::Index>(shape.size()));
  if (!rows.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "feature batch contains non-finite values: " + path.string());
  }
  return FeatureBatch(std::move(layer_id), shape, std::move(rows));
}

void save_npy(const FeatureTensor& tensor, const std::filesystem::path& path) {
  const auto& s = tensor.shape();
  const std::int64_t shape[] = {s.channels, s.height, s.width};
  write_npy(path, shape, tensor.data());
}

void save_npy(const FeatureBatch& batch, const std::filesystem::path& path) {
  const auto& s = batch.shape();
  const std::int64_t shape[] = {batch.count(), s.channels, s.height, s.width};
  write_npy(path, shape, std::span<const float>(batch.rows().data(), static_cast<std::size_t>(batch.rows().size())));
}

void save_npy(const AnomalyMap& map, const std::filesystem::path& path) {
  const std::int64_t shape[] = {map.height, map.width};
  write_npy(path, shape, map.values);
}

AnomalyMap load_map_npy(const std::filesystem::path& path) {
  auto arr = read_npy(path);
  while (arr.shape.size() > 2 && arr.shape.front() == 1) arr.shape.erase(arr.shape.begin());
  if (arr.shape.size() != 2) {
    throw Error(ErrorCode::kShapeMismatch, "expected an (H, W) array in " + path.string());
  }
  AnomalyMap map(arr.shape[0], arr.shape[1], MapResolution::kInput);
  map.values = std::move(arr.data);
  return map;
}

}  // namespace fre
