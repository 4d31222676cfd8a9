#include "fre/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fre/error.hpp"

namespace fs = std::filesystem;

namespace fre {
namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

void require_readable(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
}

int cv_interpolation(Interpolation mode) {
  return mode == Interpolation::kBilinear ? cv::INTER_LINEAR : cv::INTER_NEAREST;
}

void scan_split(const fs::path& root, Split split, DatasetLayout layout, std::vector<Sample>& out) {
  const fs::path split_dir = root / to_string(split);
  if (!fs::is_directory(split_dir)) {
    throw Error(ErrorCode::kEmptySplit, "empty split: missing directory " + split_dir.string());
  }
  const auto before = out.size();
  for (const auto& class_dir : sorted_entries(split_dir)) {
    if (!fs::is_directory(class_dir)) {
      throw Error(ErrorCode::kUnsupportedFile, "unexpected file outside a class folder: " + class_dir.string());
    }
    const std::string defect = class_dir.filename().string();
    if (split == Split::kTrain && defect != "good") {
      throw Error(ErrorCode::kUnsupportedFile, "train split may only contain 'good', found " + class_dir.string());
    }
    for (const auto& file : sorted_entries(class_dir)) {
      if (!fs::is_regular_file(file) || !is_image_file(file)) {
        throw Error(ErrorCode::kUnsupportedFile, "not a PNG/JPEG image: " + file.string());
      }
      require_readable(file);
      Sample s;
      s.split = split;
      s.defect_type = defect;
      s.image_path = file;
      s.image_id = to_string(split) + "/" + defect + "/" + file.stem().string();
      if (layout == DatasetLayout::kMvtec && split == Split::kTest && defect != "good") {
        const fs::path mask = root / "ground_truth" / defect / (file.stem().string() + "_mask.png");
        if (!fs::is_regular_file(mask)) {
          throw Error(ErrorCode::kMissingMask, "no mask for " + file.string() + " (expected " + mask.string() + ")");
        }
        require_readable(mask);
        s.mask_path = mask;
      }
      out.push_back(std::move(s));
    }
  }
  if (out.size() == before) throw Error(ErrorCode::kEmptySplit, "empty split: " + split_dir.string());
}

}  // namespace

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }
std::string to_string(DatasetLayout layout) { return layout == DatasetLayout::kMvtec ? "mvtec" : "mtd"; }

DatasetLayout parse_layout(const std::string& s) {
  if (s == "mvtec") return DatasetLayout::kMvtec;
  if (s == "mtd") return DatasetLayout::kMtd;
  throw Error(ErrorCode::kConfig, "unknown dataset layout '" + s + "' (mvtec|mtd)");
}

std::vector<Sample> scan_dataset(const fs::path& root, DatasetLayout layout) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::kIo, "dataset root does not exist: " + root.string());
  std::vector<Sample> samples;
  scan_split(root, Split::kTrain, layout, samples);
  scan_split(root, Split::kTest, layout, samples);
  return samples;
}

std::vector<Sample> filter_split(const std::vector<Sample>& samples, Split split) {
  std::vector<Sample> out;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out),
               [split](const Sample& s) { return s.split == split; });
  return out;
}

Image load_image(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::kDecode, "cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image img;
  img.height = rgb.rows;
  img.width = rgb.cols;
  img.rgb.assign(rgb.datastart, rgb.dataend);
  return img;
}

void save_image(const Image& image, const fs::path& path) {
  if (image.rgb.size() != static_cast<std::size_t>(image.height) * image.width * 3) {
    throw Error(ErrorCode::kInvalidArgument, "image buffer does not match its size");
  }
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw Error(ErrorCode::kIo, "cannot write image " + path.string());
}

void save_mask_png(const Mask& mask, const fs::path& path) {
  cv::Mat img(static_cast<int>(mask.height), static_cast<int>(mask.width), CV_8UC1);
  for (std::size_t p = 0; p < mask.values.size(); ++p) img.data[p] = mask.values[p] ? 255 : 0;
  if (!cv::imwrite(path.string(), img)) throw Error(ErrorCode::kIo, "cannot write mask " + path.string());
}

FeatureTensor preprocess(const Image& image, const PreprocessConfig& config) {
  config.validate();
  if (image.height < 1 || image.width < 1 || image.rgb.size() != static_cast<std::size_t>(image.height * image.width * 3)) {
    throw Error(ErrorCode::kDecode, "image buffer does not match its size");
  }
  cv::Mat src(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat resized;
  if (image.height == config.target_height && image.width == config.target_width) {
    resized = src;
  } else {
    cv::resize(src, resized, cv::Size(config.target_width, config.target_height), 0, 0,
               cv_interpolation(config.interpolation));
  }
  const auto h = static_cast<std::int64_t>(config.target_height);
  const auto w = static_cast<std::int64_t>(config.target_width);
  std::vector<float> data(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t i = 0; i < h; ++i) {
    const auto* row = resized.ptr<std::uint8_t>(static_cast<int>(i));
    for (std::int64_t j = 0; j < w; ++j) {
      for (std::int64_t c = 0; c < 3; ++c) {
        const float x = static_cast<float>(row[j * 3 + c]) / 255.0f;
        data[static_cast<std::size_t>((c * h + i) * w + j)] =
            (x - config.mean[static_cast<std::size_t>(c)]) / config.std[static_cast<std::size_t>(c)];
      }
    }
  }
  return FeatureTensor("input", Shape3{3, h, w}, std::move(data));
}

Mask load_mask(const fs::path& path, int height, int width) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw Error(ErrorCode::kDecode, "cannot decode mask " + path.string());
  cv::Mat resized;
  cv::resize(gray, resized, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  Mask mask(height, width);
  for (int i = 0; i < height; ++i) {
    const auto* row = resized.ptr<std::uint8_t>(i);
    for (int j = 0; j < width; ++j) mask.at(i, j) = row[j] > 127 ? 1 : 0;
  }
  return mask;
}

Mask sample_mask(const Sample& sample, const PreprocessConfig& config) {
  if (!sample.mask_path) return Mask(config.target_height, config.target_width);
  return load_mask(*sample.mask_path, config.target_height, config.target_width);
}

void write_heatmap_png(const AnomalyMap& map, const fs::path& path) {
  cv::Mat img(static_cast<int>(map.height), static_cast<int>(map.width), CV_8UC1);
  float lo = 0.0f;
  float hi = 0.0f;
  if (!map.values.empty()) {
    const auto [a, b] = std::minmax_element(map.values.begin(), map.values.end());
    lo = *a;
    hi = *b;
  }
  const float range = hi - lo;
  for (std::int64_t i = 0; i < map.height; ++i) {
    auto* row = img.ptr<std::uint8_t>(static_cast<int>(i));
    for (std::int64_t j = 0; j < map.width; ++j) {
      const float v = range > 0.0f ? (map.at(i, j) - lo) / range : 0.0f;
      row[j] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    }
  }
  if (!cv::imwrite(path.string(), img)) throw Error(ErrorCode::kIo, "cannot write heatmap " + path.string());
}

}  // namespace fre
