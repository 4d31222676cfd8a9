#include "fre/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <chrono>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "fre/backbone.hpp"
#include "fre/dataset.hpp"
#include "fre/error.hpp"
#include "fre/feature_store.hpp"
#include "fre/fre.hpp"
#include "fre/npy.hpp"
#include "fre/subspace.hpp"
#include "json_io.hpp"

namespace fs = std::filesystem;

namespace fre {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::map<std::string, FeatureTensor> pick_layers(std::map<std::string, FeatureTensor> all,
                                                 const std::vector<std::string>& layers,
                                                 const std::string& image_id) {
  if (layers.empty()) return all;
  std::map<std::string, FeatureTensor> out;
  for (const auto& id : layers) {
    auto it = all.find(id);
    if (it == all.end()) throw Error(ErrorCode::kMissingLayer, "no layer '" + id + "' for " + image_id);
    out.emplace(id, std::move(it->second));
  }
  return out;
}

class LiveSource final : public FeatureSource {
 public:
  LiveSource(const RunConfig& config, const PreprocessConfig* preprocess)
      : spec_(BackboneSpec::from_manifest(config.backbone)),
        net_(Backbone::load(spec_)),
        preprocess_(preprocess ? *preprocess : spec_.preprocess_defaults()) {
    if (preprocess_.target_height != spec_.input_shape[2] || preprocess_.target_width != spec_.input_shape[3]) {
      throw Error(ErrorCode::kConfig, "preprocessing size " + std::to_string(preprocess_.target_height) + "x" +
                                          std::to_string(preprocess_.target_width) +
                                          " does not match the backbone input");
    }
    if (!config.dataset.empty()) {
      for (const auto& s : scan_dataset(config.dataset, config.layout)) {
        const bool has_mask = config.layout == DatasetLayout::kMvtec && s.split == Split::kTest;
        items_.push_back({s.image_id, s.split, s.defect_type, s.image_path, has_mask});
        mask_paths_[s.image_id] = s.mask_path;
      }
    }
    for (const auto& p : config.images) {
      items_.push_back({p.stem().string(), Split::kTest, "", p, false});
    }
  }

  std::string backbone() const override { return spec_.name; }
  std::vector<TapSpec> layers() const override { return spec_.taps; }
  PreprocessConfig preprocess() const override { return preprocess_; }
  const std::vector<SourceItem>& items() const override { return items_; }

  std::map<std::string, FeatureTensor> features(const SourceItem& item,
                                                const std::vector<std::string>& layers) const override {
    const auto input = fre::preprocess(load_image(item.image_path), preprocess_);
    return pick_layers(net_.forward(input), layers, item.image_id);
  }

  std::optional<Mask> mask(const SourceItem& item) const override {
    if (!item.has_mask) return std::nullopt;
    auto it = mask_paths_.find(item.image_id);
    if (it != mask_paths_.end() && it->second) {
      return load_mask(*it->second, preprocess_.target_height, preprocess_.target_width);
    }
    return Mask(preprocess_.target_height, preprocess_.target_width);
  }

 private:
  BackboneSpec spec_;
  Backbone net_;
  PreprocessConfig preprocess_;
  std::vector<SourceItem> items_;
  std::map<std::string, std::optional<fs::path>> mask_paths_;
};

class StoreSource final : public FeatureSource {
 public:
  explicit StoreSource(const fs::path& dir) : store_(FeatureStore::open(dir)) {
    for (const auto& r : store_.records()) {
      items_.push_back({r.image_id, r.split, r.defect_type, {}, r.mask_file.has_value()});
      index_[r.image_id] = records_.size();
      records_.push_back(r);
    }
  }

  std::string backbone() const override { return store_.backbone(); }
  std::vector<TapSpec> layers() const override { return store_.layers(); }
  PreprocessConfig preprocess() const override {
    if (store_.preprocess()) return *store_.preprocess();
    PreprocessConfig p;
    p.target_height = static_cast<int>(store_.input_height());
    p.target_width = static_cast<int>(store_.input_width());
    return p;
  }
  const std::vector<SourceItem>& items() const override { return items_; }

  std::map<std::string, FeatureTensor> features(const SourceItem& item,
                                                const std::vector<std::string>& layers) const override {
    const auto& record = records_.at(index_.at(item.image_id));
    if (layers.empty()) return store_.load_all(record);
    std::map<std::string, FeatureTensor> out;
    for (const auto& id : layers) out.emplace(id, store_.load(record, id));
    return out;
  }

  std::optional<Mask> mask(const SourceItem& item) const override {
    return store_.load_mask(records_.at(index_.at(item.image_id)));
  }

 private:
  FeatureStore store_;
  std::vector<SourceItem> items_;
  std::vector<FeatureRecord> records_;
  std::map<std::string, std::size_t> index_;
};

std::unique_ptr<FeatureSource> make_source(const RunConfig& config, const PreprocessConfig* preprocess) {
  if (config.features.empty() == config.backbone.empty()) {
    throw Error(ErrorCode::kConfig, "configure exactly one feature source: --features or --backbone");
  }
  if (!config.features.empty()) {
    auto source = std::make_unique<StoreSource>(config.features);
    if (preprocess && source->preprocess() != *preprocess) {
      throw Error(ErrorCode::kConfig, "feature directory was extracted with different preprocessing than the bundle");
    }
    return source;
  }
  return std::make_unique<LiveSource>(config, preprocess);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

void echo_config(const RunConfig& config) {
  write_text(config.out / "config.toml", render_toml(config));
}

// Commands that consume a bundle echo the layer and map settings it carries.
void echo_config(const RunConfig& config, const ModelBundle& bundle) {
  RunConfig resolved = config;
  resolved.layers = bundle.fusion_layers;
  resolved.score_layer = bundle.score_layer;
  resolved.map_options = bundle.map_options;
  echo_config(resolved);
}

fs::path bundle_path_for(const RunConfig& config) {
  return config.bundle.empty() ? config.out / "model.freb" : config.bundle;
}

std::string flat_id(const std::string& image_id) {
  std::string s = image_id;
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

ModelBundle load_checked_bundle(const RunConfig& config) {
  auto bundle = load_bundle(config.bundle);
  bundle.validate();
  return bundle;
}

void check_backbone(const ModelBundle& bundle, const FeatureSource& source) {
  if (bundle.backbone != source.backbone()) {
    throw Error(ErrorCode::kConfig, "bundle was fitted on backbone '" + bundle.backbone + "' but the features come from '" +
                                        source.backbone() + "'");
  }
}

std::vector<std::string> bundle_layers(const ModelBundle& bundle) {
  std::vector<std::string> layers = bundle.fusion_layers;
  if (std::find(layers.begin(), layers.end(), bundle.score_layer) == layers.end()) layers.push_back(bundle.score_layer);
  return layers;
}

// Runs `work(i)` for i in [0, n) on up to `workers` threads; the first
// exception (lowest index) is rethrown after all threads join.
template <class Work>
void parallel_for(std::size_t n, int workers, Work&& work) {
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          work(i);
        } catch (...) {
          errors[i] = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const SplitMetrics& m) {
  return {{"images", m.images},
          {"anomalous", m.anomalous},
          {"image_auroc", optional_number(m.image_auroc)},
          {"pixel_auroc", optional_number(m.pixel_auroc)},
          {"pro", optional_number(m.pro)}};
}

std::string fmt_metric(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * *v;
  return os.str();
}

StageStats stage_stats(std::vector<double> ms) {
  StageStats s;
  if (ms.empty()) return s;
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  s.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  return s;
}

Image bench_image(int height, int width) {
  Image img;
  img.height = height;
  img.width = width;
  img.rgb.resize(static_cast<std::size_t>(height) * width * 3);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      auto* px = &img.rgb[(static_cast<std::size_t>(i) * width + j) * 3];
      px[0] = static_cast<std::uint8_t>((i * 7 + j * 3) % 256);
      px[1] = static_cast<std::uint8_t>((i * j) % 251);
      px[2] = static_cast<std::uint8_t>((i + 2 * j) % 256);
    }
  }
  return img;
}

}  // namespace

std::vector<SourceItem> FeatureSource::items(Split split) const {
  std::vector<SourceItem> out;
  for (const auto& item : items()) {
    if (item.split == split) out.push_back(item);
  }
  return out;
}

std::unique_ptr<FeatureSource> open_source(const RunConfig& config, const PreprocessConfig* preprocess) {
  return make_source(config, preprocess);
}

void resolve_layers(RunConfig& config, const std::vector<TapSpec>& taps) {
  if (taps.empty()) throw Error(ErrorCode::kConfig, "feature source declares no layers");
  auto known = [&](const std::string& id) {
    return std::any_of(taps.begin(), taps.end(), [&](const TapSpec& t) { return t.layer_id == id; });
  };
  if (config.layers.empty()) config.layers = {taps[(taps.size() - 1) / 2].layer_id};
  if (config.score_layer.empty()) config.score_layer = config.layers[(config.layers.size() - 1) / 2];
  std::set<std::string> seen;
  for (const auto& id : config.layers) {
    if (!known(id)) throw Error(ErrorCode::kMissingLayer, "unknown layer '" + id + "'");
    if (!seen.insert(id).second) throw Error(ErrorCode::kConfig, "layer '" + id + "' listed twice");
  }
  if (!known(config.score_layer)) throw Error(ErrorCode::kMissingLayer, "unknown score layer '" + config.score_layer + "'");
}

fs::path cmd_extract(const RunConfig& config, std::ostream* log) {
  config.validate();
  LiveSource source(config, nullptr);
  std::vector<TapSpec> taps;
  if (config.layers.empty()) {
    taps = source.layers();
  } else {
    BackboneSpec spec = BackboneSpec::from_manifest(config.backbone);
    for (const auto& id : config.layers) taps.push_back(spec.tap(id));
  }
  std::vector<std::string> ids;
  for (const auto& t : taps) ids.push_back(t.layer_id);
  const auto pre = source.preprocess();
  FeatureStoreWriter writer(config.out, source.backbone(), taps, pre.target_height, pre.target_width, pre);
  const auto start = Clock::now();
  for (const auto& item : source.items()) {
    const auto features = source.features(item, ids);
    const auto mask = source.mask(item);
    writer.add(item.image_id, item.split, item.defect_type, features, mask ? &*mask : nullptr);
  }
  writer.finish();
  echo_config(config);
  if (log) {
    *log << "extracted " << source.items().size() << " images x " << ids.size() << " layers to " << config.out.string()
         << " in " << std::fixed << std::setprecision(2) << seconds_since(start) << " s\n";
  }
  return config.out;
}

FitReport cmd_fit(const RunConfig& config_in, std::ostream* log) {
  config_in.validate();
  auto source = make_source(config_in, nullptr);
  RunConfig config = config_in;
  resolve_layers(config, source->layers());
  std::vector<std::string> fit_layers = config.layers;
  if (std::find(fit_layers.begin(), fit_layers.end(), config.score_layer) == fit_layers.end()) {
    fit_layers.push_back(config.score_layer);
  }

  const auto train = source->items(Split::kTrain);
  if (train.empty()) throw Error(ErrorCode::kEmptySplit, "empty split: no training images");
  if (train.size() < 2) throw Error(ErrorCode::kEmptySplit, "empty split: fitting needs at least 2 training images");

  FitReport report;
  report.train_images = train.size();
  std::map<std::string, Shape3> shapes;
  for (const auto& t : source->layers()) shapes[t.layer_id] = t.shape;
  std::map<std::string, RowMatrixF> data;
  for (const auto& id : fit_layers) {
    data[id] = RowMatrixF(static_cast<Eigen::Index>(train.size()), shapes.at(id).size());
  }

  const auto extract_start = Clock::now();
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto features = source->features(train[i], fit_layers);
    for (const auto& id : fit_layers) {
      const auto& t = features.at(id);
      if (t.shape() != shapes.at(id)) {
        throw Error(ErrorCode::kShapeMismatch, "feature shape drift in layer '" + id + "' at " + train[i].image_id +
                                                   ": expected " + shapes.at(id).str() + ", got " + t.shape().str());
      }
      const auto values = t.data();
      std::copy(values.begin(), values.end(), data[id].row(static_cast<Eigen::Index>(i)).data());
    }
  }
  report.extract_seconds = seconds_since(extract_start);

  ModelBundle bundle;
  bundle.backbone = source->backbone();
  bundle.preprocess = source->preprocess();
  bundle.map_options = config.map_options;
  bundle.fusion_layers = config.layers;
  bundle.score_layer = config.score_layer;
  for (const auto& id : fit_layers) {
    const auto start = Clock::now();
    FeatureBatch batch(id, shapes.at(id), std::move(data[id]));
    data.erase(id);
    FitStats stats;
    auto model = fit(batch, config.variance, &stats);
    LayerFit lf;
    lf.layer_id = id;
    lf.dim = model.dim();
    lf.rank = model.rank();
    lf.numerical_rank = stats.numerical_rank;
    lf.explained_variance = model.explained_variance;
    lf.seconds = seconds_since(start);
    report.layers.push_back(lf);
    bundle.layers.emplace(id, std::move(model));
    if (log) {
      *log << "fit " << id << ": d=" << lf.dim << " m=" << lf.rank << " explained=" << std::setprecision(6)
           << lf.explained_variance << " time=" << std::fixed << std::setprecision(3) << lf.seconds << " s\n"
           << std::defaultfloat;
    }
  }
  bundle.validate();

  report.bundle_path = bundle_path_for(config);
  if (report.bundle_path.has_parent_path()) fs::create_directories(report.bundle_path.parent_path());
  save_bundle(bundle, report.bundle_path);

  json layers = json::array();
  for (const auto& l : report.layers) {
    layers.push_back({{"layer_id", l.layer_id},
                      {"dim", l.dim},
                      {"rank", l.rank},
                      {"numerical_rank", l.numerical_rank},
                      {"explained_variance", l.explained_variance},
                      {"fit_seconds", l.seconds}});
  }
  const json summary = {{"bundle", report.bundle_path.string()},
                        {"train_images", report.train_images},
                        {"extract_seconds", report.extract_seconds},
                        {"layers", layers}};
  write_text(config.out / "fit.json", summary.dump(2) + "\n");
  echo_config(config);
  if (log) *log << "wrote " << report.bundle_path.string() << " (" << train.size() << " training images)\n";
  return report;
}

std::vector<ScoreRow> cmd_score(const RunConfig& config, std::ostream* log) {
  config.validate();
  const auto bundle = load_checked_bundle(config);
  auto source = make_source(config, &bundle.preprocess);
  check_backbone(bundle, *source);
  auto items = source->items(Split::kTest);
  if (items.empty()) throw Error(ErrorCode::kEmptySplit, "empty split: nothing to score");
  const auto layers = bundle_layers(bundle);
  const auto h = bundle.preprocess.target_height;
  const auto w = bundle.preprocess.target_width;
  const fs::path heat_dir = config.out / "heatmaps";
  fs::create_directories(heat_dir);

  std::vector<ScoreRow> rows(items.size());
  parallel_for(items.size(), config.workers, [&](std::size_t i) {
    const auto& item = items[i];
    const auto result = score_image(bundle, source->features(item, layers), h, w);
    rows[i] = {item.image_id, item.defect_type.empty() ? -1 : (item.anomalous() ? 1 : 0), item.defect_type,
               result.score};
    write_heatmap_png(result.fused.map, heat_dir / (flat_id(item.image_id) + ".png"));
    save_npy(result.fused.map, heat_dir / (flat_id(item.image_id) + ".npy"));
  });
  write_scores_csv(rows, config.out / "scores.csv");
  echo_config(config, bundle);
  if (log) *log << "scored " << rows.size() << " images into " << config.out.string() << "\n";
  return rows;
}

SplitMetrics compute_metrics(const std::vector<EvalRecord>& records) {
  SplitMetrics m;
  m.images = records.size();
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& r : records) {
    scores.push_back(r.score);
    labels.push_back(r.anomalous ? 1 : 0);
    m.anomalous += r.anomalous ? 1 : 0;
  }
  if (m.anomalous > 0 && m.anomalous < m.images) m.image_auroc = auroc(scores, labels);

  const bool pixel_ready = !records.empty() && std::all_of(records.begin(), records.end(), [](const EvalRecord& r) {
    return r.map.has_value() && r.mask.has_value();
  });
  if (!pixel_ready) return m;
  std::vector<AnomalyMap> maps;
  std::vector<Mask> masks;
  std::size_t positive = 0;
  std::size_t total = 0;
  for (const auto& r : records) {
    maps.push_back(*r.map);
    masks.push_back(*r.mask);
    positive += static_cast<std::size_t>(std::count(r.mask->values.begin(), r.mask->values.end(), 1));
    total += r.mask->values.size();
  }
  if (positive == 0 || positive == total) return m;
  m.pixel_auroc = pixel_auroc(maps, masks);
  m.pro = pro(maps, masks).area;
  return m;
}

EvalReport cmd_eval(const RunConfig& config, std::ostream* log) {
  config.validate();
  const auto bundle = load_checked_bundle(config);
  auto source = make_source(config, &bundle.preprocess);
  check_backbone(bundle, *source);
  const auto items = source->items(Split::kTest);
  if (items.empty()) throw Error(ErrorCode::kEmptySplit, "empty split: no test images");
  const auto layers = bundle_layers(bundle);
  const auto h = bundle.preprocess.target_height;
  const auto w = bundle.preprocess.target_width;
  const bool with_masks = std::any_of(items.begin(), items.end(), [](const SourceItem& s) { return s.has_mask; });
  const fs::path heat_dir = config.out / "heatmaps";
  if (config.heatmaps) fs::create_directories(heat_dir);

  std::vector<EvalRecord> records(items.size());
  const auto start = Clock::now();
  parallel_for(items.size(), config.workers, [&](std::size_t i) {
    const auto& item = items[i];
    auto result = score_image(bundle, source->features(item, layers), h, w);
    EvalRecord r;
    r.image_id = item.image_id;
    r.defect_type = item.defect_type;
    r.score = result.score;
    r.anomalous = item.anomalous();
    if (config.heatmaps) {
      write_heatmap_png(result.fused.map, heat_dir / (flat_id(item.image_id) + ".png"));
      save_npy(result.fused.map, heat_dir / (flat_id(item.image_id) + ".npy"));
    }
    if (with_masks) {
      r.mask = source->mask(item);
      if (!r.mask) {
        if (item.anomalous()) throw Error(ErrorCode::kMissingMask, "no ground-truth mask for " + item.image_id);
        r.mask = Mask(h, w);
      }
      r.map = std::move(result.fused.map);
    }
    records[i] = std::move(r);
  });
  const double seconds = seconds_since(start);

  EvalReport report;
  report.category = config.dataset.empty() ? config.features.filename().string() : config.dataset.filename().string();
  for (const auto& r : records) {
    report.scores.push_back({r.image_id, r.anomalous ? 1 : 0, r.defect_type, r.score});
  }
  report.overall = compute_metrics(records);
  if (!report.overall.image_auroc) {
    throw Error(ErrorCode::kSingleClass, "evaluation needs both good and defective test images");
  }
  std::set<std::string> defects;
  for (const auto& r : records) {
    if (r.anomalous) defects.insert(r.defect_type);
  }
  for (const auto& d : defects) {
    std::vector<EvalRecord> subset;
    for (const auto& r : records) {
      if (!r.anomalous || r.defect_type == d) subset.push_back(r);
    }
    report.per_defect[d] = compute_metrics(subset);
  }

  write_scores_csv(report.scores, config.out / "scores.csv");
  json per_defect = json::object();
  for (const auto& [d, m] : report.per_defect) per_defect[d] = metrics_json(m);
  json metrics = metrics_json(report.overall);
  metrics["category"] = report.category;
  metrics["backbone"] = bundle.backbone;
  metrics["fusion_layers"] = bundle.fusion_layers;
  metrics["score_layer"] = bundle.score_layer;
  metrics["pro_fpr_limit"] = kDefaultProFprLimit;
  metrics["per_defect"] = per_defect;
  metrics["eval_seconds"] = seconds;
  write_text(config.out / "metrics.json", metrics.dump(2) + "\n");
  write_text(config.out / "report.txt", format_report(report));
  echo_config(config, bundle);
  if (log) *log << format_report(report);
  return report;
}

BenchReport cmd_bench(const RunConfig& config, std::ostream* log) {
  config.validate();
  set_inference_threads(config.bench.threads);
  const auto bundle = load_checked_bundle(config);
  const auto spec = BackboneSpec::from_manifest(config.backbone);
  if (spec.name != bundle.backbone) {
    throw Error(ErrorCode::kConfig, "bundle was fitted on backbone '" + bundle.backbone + "', not '" + spec.name + "'");
  }
  const auto net = Backbone::load(spec);
  const auto h = bundle.preprocess.target_height;
  const auto w = bundle.preprocess.target_width;

  fs::path input;
  if (!config.dataset.empty()) {
    const auto samples = scan_dataset(config.dataset, config.layout);
    const auto test = filter_split(samples, Split::kTest);
    input = test.empty() ? samples.front().image_path : test.front().image_path;
  } else {
    fs::create_directories(config.out);
    input = config.out / "bench_input.png";
    save_image(bench_image(h, w), input);
  }

  BenchReport report;
  report.backbone = bundle.backbone;
  report.fusion_layers = bundle.fusion_layers;
  report.input = config.dataset.empty() ? "synthetic" : input.string();
  report.warmup = config.bench.warmup;
  report.iterations = config.bench.iterations;
  report.threads = config.bench.threads;

  std::map<std::string, std::vector<double>> ms;
  double sink = 0.0;
  for (int it = 0; it < config.bench.warmup + config.bench.iterations; ++it) {
    const auto t0 = Clock::now();
    const auto image = load_image(input);
    const auto t1 = Clock::now();
    const auto tensor = preprocess(image, bundle.preprocess);
    const auto t2 = Clock::now();
    const auto features = net.forward(tensor);
    const auto t3 = Clock::now();
    const auto result = score_image(bundle, features, h, w);
    const auto t4 = Clock::now();
    sink += result.score;
    if (it < config.bench.warmup) continue;
    auto span_ms = [](Clock::time_point a, Clock::time_point b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    ms["decode"].push_back(span_ms(t0, t1));
    ms["preprocess"].push_back(span_ms(t1, t2));
    ms["forward"].push_back(span_ms(t2, t3));
    ms["fre"].push_back(span_ms(t3, t4));
    ms["total"].push_back(span_ms(t0, t4));
  }
  if (!std::isfinite(sink)) throw Error(ErrorCode::kNonFinite, "benchmark produced non-finite scores");
  for (auto& [stage, values] : ms) report.stages[stage] = stage_stats(values);
  const double no_decode =
      report.stages["preprocess"].mean_ms + report.stages["forward"].mean_ms + report.stages["fre"].mean_ms;
  report.fps = 1000.0 / no_decode;
  report.fps_with_decode = 1000.0 / report.stages["total"].mean_ms;
  report.fre_overhead_ratio = report.stages["fre"].mean_ms / report.stages["forward"].mean_ms;

  write_text(config.out / "bench.json", bench_to_json(report));
  echo_config(config, bundle);
  if (log) {
    *log << std::fixed << std::setprecision(3);
    for (const auto& [stage, s] : report.stages) {
      *log << std::left << std::setw(11) << stage << " mean " << s.mean_ms << " ms  median " << s.median_ms << " ms\n";
    }
    *log << "fps " << std::setprecision(1) << report.fps << " (with decode " << report.fps_with_decode
         << "), fre overhead " << std::setprecision(4) << report.fre_overhead_ratio << "\n"
         << std::defaultfloat;
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os << "category " << report.category << "\n";
  os << std::left << std::setw(24) << "defect" << std::right << std::setw(8) << "images" << std::setw(13)
     << "image_auroc" << std::setw(13) << "pixel_auroc" << std::setw(8) << "pro" << "\n";
  auto row = [&os](const std::string& name, const SplitMetrics& m) {
    os << std::left << std::setw(24) << name << std::right << std::setw(8) << m.images << std::setw(13)
       << fmt_metric(m.image_auroc) << std::setw(13) << fmt_metric(m.pixel_auroc) << std::setw(8) << fmt_metric(m.pro)
       << "\n";
  };
  for (const auto& [d, m] : report.per_defect) row(d, m);
  row("all", report.overall);
  return os.str();
}

std::string bench_to_json(const BenchReport& r) {
  json stages = json::object();
  for (const auto& [name, s] : r.stages) stages[name] = {{"mean_ms", s.mean_ms}, {"median_ms", s.median_ms}};
  const json j = {{"backbone", r.backbone},
                  {"fusion_layers", r.fusion_layers},
                  {"input", r.input},
                  {"warmup", r.warmup},
                  {"iterations", r.iterations},
                  {"threads", r.threads},
                  {"stages", stages},
                  {"fps", r.fps},
                  {"fps_with_decode", r.fps_with_decode},
                  {"fre_overhead_ratio", r.fre_overhead_ratio}};
  return j.dump(2) + "\n";
}

void write_scores_csv(const std::vector<ScoreRow>& rows, const fs::path& path) {
  std::ostringstream os;
  os << "image_id,label,defect_type,score\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.image_id << ',';
    if (r.label >= 0) os << r.label;
    os << ',' << r.defect_type << ',' << r.score << "\n";
  }
  write_text(path, os.str());
}

}  // namespace fre
