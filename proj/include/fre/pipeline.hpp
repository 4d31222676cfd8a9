#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fre/backbone.hpp"
#include "fre/bundle.hpp"
#include "fre/config.hpp"
#include "fre/metrics.hpp"

namespace fre {

// One image known to a feature source.
struct SourceItem {
  std::string image_id;
  Split split = Split::kTrain;
  std::string defect_type;
  std::filesystem::path image_path;  // empty for pre-extracted features
  bool has_mask = false;

  bool anomalous() const { return defect_type != "good"; }
};

// Where layer activations come from: a live backbone run over a dataset, or a
// pre-extracted feature directory. Both yield identical tensors for the same
// images, so fit/eval results do not depend on the mode.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;

  virtual std::string backbone() const = 0;
  virtual std::vector<TapSpec> layers() const = 0;
  virtual PreprocessConfig preprocess() const = 0;
  virtual const std::vector<SourceItem>& items() const = 0;
  std::vector<SourceItem> items(Split split) const;

  // Thread-safe.
  virtual std::map<std::string, FeatureTensor> features(const SourceItem& item,
                                                        const std::vector<std::string>& layers) const = 0;
  // Working-resolution mask; nullopt when the item carries none.
  virtual std::optional<Mask> mask(const SourceItem& item) const = 0;
};

// Errors: kConfig when neither or both sources are configured, or when
// `preprocess` disagrees with how stored features were extracted.
std::unique_ptr<FeatureSource> open_source(const RunConfig& config, const PreprocessConfig* preprocess = nullptr);

struct LayerFit {
  std::string layer_id;
  std::int64_t dim = 0;
  std::int64_t rank = 0;
  std::int64_t numerical_rank = 0;
  double explained_variance = 0.0;
  double seconds = 0.0;
};

struct FitReport {
  std::filesystem::path bundle_path;
  std::size_t train_images = 0;
  double extract_seconds = 0.0;
  std::vector<LayerFit> layers;
};

struct ScoreRow {
  std::string image_id;
  int label = -1;  // -1 when unknown
  std::string defect_type;
  double score = 0.0;
};

struct SplitMetrics {
  std::size_t images = 0;
  std::size_t anomalous = 0;
  std::optional<double> image_auroc;
  std::optional<double> pixel_auroc;
  std::optional<double> pro;
};

struct EvalReport {
  std::string category;
  std::vector<ScoreRow> scores;
  SplitMetrics overall;
  std::map<std::string, SplitMetrics> per_defect;
};

struct StageStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
};

struct BenchReport {
  std::string backbone;
  std::vector<std::string> fusion_layers;
  std::string input;
  int warmup = 0;
  int iterations = 0;
  int threads = 1;
  std::map<std::string, StageStats> stages;  // decode, preprocess, forward, fre, total
  double fps = 0.0;              // excludes decode
  double fps_with_decode = 0.0;
  double fre_overhead_ratio = 0.0;
};

// Default layer selection: the middle tap of the source, scored on the
// middle fusion layer.
void resolve_layers(RunConfig& config, const std::vector<TapSpec>& taps);

std::filesystem::path cmd_extract(const RunConfig& config, std::ostream* log = nullptr);
FitReport cmd_fit(const RunConfig& config, std::ostream* log = nullptr);
std::vector<ScoreRow> cmd_score(const RunConfig& config, std::ostream* log = nullptr);
EvalReport cmd_eval(const RunConfig& config, std::ostream* log = nullptr);
BenchReport cmd_bench(const RunConfig& config, std::ostream* log = nullptr);

// Image metrics from scores, pixel metrics when every record has a map and a mask.
SplitMetrics compute_metrics(const std::vector<EvalRecord>& records);

std::string format_report(const EvalReport& report);
std::string bench_to_json(const BenchReport& report);
void write_scores_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path);

}  // namespace fre
