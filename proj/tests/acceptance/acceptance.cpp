// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
// Criteria 1-5 need nothing beyond this build. Criteria 6-8 run only when
//   FRE_MVTEC_ROOT     points at an MVTec AD root holding the 15 categories,
//   FRE_RESNET18_TAPS  points at a ResNet18 tap manifest (taps layer1..layer3),
//   FRE_RESNET50_TAPS  points at a ResNet50 tap manifest (taps layer1..layer4).
// FRE_WORKERS sets the evaluation worker count (default: hardware threads).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "fre/bundle.hpp"
#include "fre/fixture.hpp"
#include "fre/fre.hpp"
#include "fre/metrics.hpp"
#include "fre/pipeline.hpp"
#include "fre/subspace.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "support/test_util.hpp"

namespace fs = std::filesystem;
using Eigen::MatrixXf;
using Eigen::VectorXf;

namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::optional<fs::path> env_path(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return fs::path(v);
}

int workers() {
  if (const char* v = std::getenv("FRE_WORKERS")) return std::max(1, std::atoi(v));
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::span<const float> as_span(const VectorXf& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

VectorXf project(const fre::SubspaceModel& model, const VectorXf& u) {
  return fre::reconstruct(model, as_span(fre::transform(model, as_span(u))));
}

// 1. Projector idempotence, residual orthogonality and exact training
// reconstruction at threshold 1 on 100 random instances.
Outcome subspace_algebra() {
  const auto start = Clock::now();
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> dim_d(2, 512);
  std::uniform_int_distribution<int> rows_d(2, 64);
  std::normal_distribution<float> n01;
  double idem = 0.0;
  double ortho = 0.0;
  double recon = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim_d(rng);
    const int m = rows_d(rng);
    MatrixXf rows(m, d);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < d; ++j) rows(i, j) = n01(rng);
    }
    const auto model = fre::fit(testutil::batch_from(rows, "l"), 1.0);
    VectorXf u(d);
    for (int j = 0; j < d; ++j) u(j) = 3.0f * n01(rng);
    const VectorXf p1 = project(model, u);
    const VectorXf p2 = project(model, p1);
    idem = std::max(idem, static_cast<double>((p2 - p1).norm() / (1.0f + p1.norm())));
    const VectorXf e = fre::residual(model, as_span(u));
    const VectorXf along = model.components * e;
    ortho = std::max(ortho, static_cast<double>(along.norm() / (1.0f + e.norm())));
    for (int i = 0; i < m; ++i) {
      const VectorXf row = rows.row(i).transpose();
      const VectorXf back = project(model, row);
      recon = std::max(recon, static_cast<double>((back - row).norm() / row.norm()));
    }
  }
  const double elapsed = seconds_since(start);
  const bool ok = idem <= 1e-4 && ortho <= 1e-4 && recon <= 1e-4 && elapsed < 10.0;
  return {ok ? Verdict::kPass : Verdict::kFail,
          "100 instances, idempotence=" + fmt(idem) + " orthogonality=" + fmt(ortho) + " reconstruction=" +
              fmt(recon) + " (limit 1e-4), time=" + fmt(elapsed) + "s (limit 10s)"};
}

// 2. Closed-form two-point case and zero error on in-span vectors.
Outcome fre_correctness() {
  MatrixXf two(2, 2);
  two << 2, 0, 0, 2;
  const auto model = fre::fit(testutil::batch_from(two, "l"), 0.995);
  VectorXf u(2);
  u << 3, 3;
  const VectorXf e = fre::residual(model, as_span(u));
  const double score = fre::fre_score(as_span(e));
  const double case_err = std::max({std::abs(e(0) - 2.0), std::abs(e(1) - 2.0), std::abs(score - 2.0 * std::sqrt(2.0))});

  std::mt19937 rng(5);
  std::normal_distribution<double> n01;
  double span_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd basis;
    Eigen::VectorXd mean;
    const MatrixXf rows = oracle::manifold_rows(30, 64, 4, rng, &basis, &mean);
    const auto fitted = fre::fit(testutil::batch_from(rows, "l"), 1.0);
    // Affine combinations of training rows lie in the fitted span.
    Eigen::VectorXd w(30);
    for (int i = 0; i < 30; ++i) w(i) = n01(rng);
    w(0) += 1.0 - w.sum();
    const VectorXf in_span = (rows.cast<double>().transpose() * w).cast<float>();
    const VectorXf r = fre::residual(fitted, as_span(in_span));
    span_err = std::max(span_err, fre::fre_score(as_span(r)) / (1.0 + in_span.norm()));
  }
  const bool ok = case_err <= 1e-6 && span_err <= 1e-6;
  return {ok ? Verdict::kPass : Verdict::kFail, "two-point case err=" + fmt(case_err) +
                                                    ", in-span score/(1+|u|) max=" + fmt(span_err) + " (limit 1e-6)"};
}

// 3. AUROC, pixel AUROC and PRO against brute-force oracles.
Outcome metrics_oracles() {
  std::mt19937 rng(99);
  std::uniform_int_distribution<int> size_d(2, 200);
  std::uniform_int_distribution<int> level_d(0, 9);
  std::normal_distribution<double> n01;
  double auroc_err = 0.0;
  double pixel_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size_d(rng);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    const bool ties = trial % 2 == 0;
    for (int i = 0; i < n; ++i) {
      scores[i] = ties ? level_d(rng) : n01(rng);
      labels[i] = static_cast<std::uint8_t>(rng() & 1u);
    }
    labels[0] = 1;
    labels[1] = 0;
    auroc_err = std::max(auroc_err, std::abs(fre::auroc(scores, labels) - oracle::auroc_pairs(scores, labels)));

    const int side = std::max(2, static_cast<int>(std::sqrt(n)));
    fre::AnomalyMap map(side, side);
    fre::Mask mask(side, side);
    std::vector<double> flat;
    std::vector<std::uint8_t> truth;
    for (int p = 0; p < side * side; ++p) {
      map.values[p] = ties ? static_cast<float>(level_d(rng)) : static_cast<float>(n01(rng));
      mask.values[p] = static_cast<std::uint8_t>(rng() & 1u);
    }
    mask.values[0] = 1;
    mask.values[1] = 0;
    for (int p = 0; p < side * side; ++p) {
      flat.push_back(map.values[p]);
      truth.push_back(mask.values[p]);
    }
    const std::vector<fre::AnomalyMap> maps{map};
    const std::vector<fre::Mask> masks{mask};
    pixel_err = std::max(pixel_err, std::abs(fre::pixel_auroc(maps, masks) - oracle::auroc_pairs(flat, truth)));
  }

  double pro_err = 0.0;
  std::uniform_int_distribution<int> side_d(2, 16);
  for (int trial = 0; trial < 200; ++trial) {
    const int count = 1 + trial % 3;
    std::vector<fre::AnomalyMap> maps;
    std::vector<fre::Mask> masks;
    std::vector<oracle::OracleImage> images;
    for (int k = 0; k < count; ++k) {
      const int h = side_d(rng);
      const int w = side_d(rng);
      fre::AnomalyMap map(h, w);
      fre::Mask mask(h, w);
      for (int p = 0; p < h * w; ++p) {
        map.values[p] = trial % 4 == 0 ? static_cast<float>(level_d(rng)) : static_cast<float>(n01(rng));
        mask.values[p] = (rng() % 4 == 0) ? 1 : 0;
      }
      mask.values[0] = 1;
      mask.values[static_cast<std::size_t>(h * w - 1)] = 0;
      images.push_back({h, w, map.values, mask.values});
      maps.push_back(std::move(map));
      masks.push_back(std::move(mask));
    }
    pro_err = std::max(pro_err, std::abs(fre::pro(maps, masks, 0.3).area - oracle::pro_exhaustive(images, 0.3)));
  }
  const bool ok = auroc_err <= 1e-9 && pixel_err <= 1e-9 && pro_err <= 1e-6;
  return {ok ? Verdict::kPass : Verdict::kFail, "1000 cases auroc err=" + fmt(auroc_err) + " pixel err=" +
                                                    fmt(pixel_err) + " (limit 1e-9), 200 cases pro err=" +
                                                    fmt(pro_err) + " (limit 1e-6)"};
}

// 4. End-to-end on features from a known 5-dim manifold.
Outcome synthetic_end_to_end() {
  const auto start = Clock::now();
  testutil::TempDir work;
  synthetic::ManifoldStoreSpec spec;
  synthetic::write_manifold_store(spec, work / "feats");
  fre::RunConfig fit;
  fit.command = "fit";
  fit.features = work / "feats";
  fit.out = work / "fit";
  fit.validate();
  const auto report = fre::cmd_fit(fit);
  fre::RunConfig eval = fit;
  eval.command = "eval";
  eval.bundle = work / "fit" / "model.freb";
  eval.out = work / "eval";
  eval.validate();
  const auto result = fre::cmd_eval(eval);
  const double elapsed = seconds_since(start);
  const double image = result.overall.image_auroc.value_or(0.0);
  const double pixel = result.overall.pixel_auroc.value_or(0.0);
  const bool ok = image >= 0.99 && pixel >= 0.95 && elapsed < 30.0;
  return {ok ? Verdict::kPass : Verdict::kFail,
          "m=" + std::to_string(report.layers.at(0).rank) + " image_auroc=" + fmt(image, 4) +
              " (min 0.99) pixel_auroc=" + fmt(pixel, 4) + " (min 0.95) time=" + fmt(elapsed) + "s (limit 30s)"};
}

std::vector<std::string> json_keys(const nlohmann::json& j, const std::string& prefix = "") {
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) {
    keys.push_back(prefix + it.key());
    if (it->is_object()) {
      for (auto& k : json_keys(*it, prefix + it.key() + ".")) keys.push_back(k);
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// Fits the middle three taps of `manifest` on a synthetic category rendered at
// the backbone's input size, then benchmarks twice.
std::string bench_backbone(const fs::path& manifest, const fs::path& work, bool* ok) {
  const auto spec = fre::BackboneSpec::from_manifest(manifest);
  fre::SyntheticDatasetSpec data;
  data.size = static_cast<int>(spec.input_shape[2]);
  data.train_good = 8;
  data.test_good = 1;
  data.test_defect = 1;
  fre::write_synthetic_dataset(data, work / "data");
  const auto ids = spec.layer_ids();
  fre::RunConfig fit;
  fit.command = "fit";
  fit.backbone = manifest;
  fit.dataset = work / "data";
  fit.out = work / "fit";
  const std::size_t centre = std::clamp<std::size_t>((ids.size() - 1) / 2, 1, std::max<std::size_t>(1, ids.size() - 2));
  if (ids.size() >= 3) {
    fit.layers = {ids[centre - 1], ids[centre], ids[centre + 1]};
  } else {
    fit.layers = {ids[(ids.size() - 1) / 2]};
  }
  fre::cmd_fit(fit);
  std::vector<std::string> keys[2];
  double ratio = 0.0;
  double forward = 0.0;
  double fre_ms = 0.0;
  for (int run = 0; run < 2; ++run) {
    fre::RunConfig bench;
    bench.command = "bench";
    bench.backbone = manifest;
    bench.bundle = work / "fit" / "model.freb";
    bench.out = work / ("bench" + std::to_string(run));
    bench.validate();
    const auto report = fre::cmd_bench(bench);
    keys[run] = json_keys(nlohmann::json::parse(testutil::read_bytes(bench.out / "bench.json")));
    ratio = std::max(ratio, report.fre_overhead_ratio);
    forward = report.stages.at("forward").mean_ms;
    fre_ms = report.stages.at("fre").mean_ms;
  }
  const bool stable = keys[0] == keys[1] && !keys[0].empty();
  *ok = ratio <= 0.20 && stable;
  return spec.name + " " + std::to_string(fit.layers.size()) + "L ratio=" + fmt(ratio) + " (fre " + fmt(fre_ms) +
         "ms / forward " + fmt(forward) + "ms, limit 0.20) schema " + (stable ? "stable" : "CHANGED");
}

// 5. FRE stage time relative to the backbone forward pass.
Outcome throughput() {
  testutil::TempDir work;
  fre::write_fixture(fre::bench_fixture(), work / "fixture");
  bool ok = true;
  std::string detail = bench_backbone(work / "fixture" / "taps.json", work / "fixture_run", &ok);
  for (const char* var : {"FRE_RESNET18_TAPS", "FRE_RESNET50_TAPS"}) {
    if (const auto manifest = env_path(var)) {
      bool real_ok = true;
      detail += "; " + bench_backbone(*manifest, work / var, &real_ok);
      ok = ok && real_ok;
    }
  }
  return {ok ? Verdict::kPass : Verdict::kFail, detail};
}

const std::vector<std::string> kCategories{"bottle", "cable",  "capsule", "carpet",     "grid",
                                           "hazelnut", "leather", "metal_nut", "pill",   "screw",
                                           "tile",   "toothbrush", "transistor", "wood", "zipper"};

std::optional<std::string> missing_inputs(const char* taps_var) {
  const auto root = env_path("FRE_MVTEC_ROOT");
  if (!root) return "FRE_MVTEC_ROOT not set";
  if (!env_path(taps_var)) return std::string(taps_var) + " not set";
  for (const auto& c : kCategories) {
    if (!fs::is_directory(*root / c)) return "category " + c + " missing under FRE_MVTEC_ROOT";
  }
  return std::nullopt;
}

fre::SplitMetrics run_category(const fs::path& manifest, const std::string& category,
                               const std::vector<std::string>& layers, const fs::path& work) {
  fre::RunConfig fit;
  fit.command = "fit";
  fit.backbone = manifest;
  fit.dataset = *env_path("FRE_MVTEC_ROOT") / category;
  fit.layers = layers;
  fit.any_layer_count = true;
  fit.workers = workers();
  fit.out = work / category;
  fit.validate();
  fre::cmd_fit(fit);
  fre::RunConfig eval = fit;
  eval.command = "eval";
  eval.bundle = fit.out / "model.freb";
  eval.validate();
  auto report = fre::cmd_eval(eval);
  std::cout << "  " << category << ": image_auroc=" << fmt(report.overall.image_auroc.value_or(0) * 100, 4)
            << " pixel_auroc=" << fmt(report.overall.pixel_auroc.value_or(0) * 100, 4)
            << " pro=" << fmt(report.overall.pro.value_or(0) * 100, 4) << "\n";
  return report.overall;
}

// 6. ResNet18, single middle layer, image AUROC over all categories.
Outcome resnet18_detection() {
  if (auto why = missing_inputs("FRE_RESNET18_TAPS")) return {Verdict::kSkip, *why};
  const auto manifest = *env_path("FRE_RESNET18_TAPS");
  const auto ids = fre::BackboneSpec::from_manifest(manifest).layer_ids();
  const std::string middle = ids[(ids.size() - 1) / 2];
  testutil::TempDir work;
  double sum = 0.0;
  for (const auto& c : kCategories) sum += run_category(manifest, c, {middle}, work.path()).image_auroc.value_or(0);
  const double mean = 100.0 * sum / static_cast<double>(kCategories.size());
  const bool ok = std::abs(mean - 94.1) <= 2.0;
  return {ok ? Verdict::kPass : Verdict::kFail,
          "layer " + middle + " mean image_auroc=" + fmt(mean, 4) + " (target 94.1 +/- 2.0)"};
}

// 7. ResNet18 three-layer fusion, pixel AUROC and PRO over all categories.
Outcome resnet18_segmentation() {
  if (auto why = missing_inputs("FRE_RESNET18_TAPS")) return {Verdict::kSkip, *why};
  const auto manifest = *env_path("FRE_RESNET18_TAPS");
  const auto ids = fre::BackboneSpec::from_manifest(manifest).layer_ids();
  if (ids.size() < 3) return {Verdict::kFail, "manifest has fewer than 3 taps"};
  const std::size_t centre = std::clamp<std::size_t>((ids.size() - 1) / 2, 1, ids.size() - 2);
  const std::vector<std::string> layers{ids[centre - 1], ids[centre], ids[centre + 1]};
  testutil::TempDir work;
  double pixel = 0.0;
  double pro = 0.0;
  for (const auto& c : kCategories) {
    const auto m = run_category(manifest, c, layers, work.path());
    pixel += m.pixel_auroc.value_or(0);
    pro += m.pro.value_or(0);
  }
  pixel *= 100.0 / static_cast<double>(kCategories.size());
  pro *= 100.0 / static_cast<double>(kCategories.size());
  const bool ok = std::abs(pixel - 97.8) <= 1.5 && std::abs(pro - 92.7) <= 2.0;
  return {ok ? Verdict::kPass : Verdict::kFail, "mean pixel_auroc=" + fmt(pixel, 4) + " (target 97.8 +/- 1.5) pro=" +
                                                    fmt(pro, 4) + " (target 92.7 +/- 2.0)"};
}

// 8. ResNet50 per-layer PRO ordering: layer2 >= layer3 > layer1 > layer4.
Outcome resnet50_layer_order() {
  if (auto why = missing_inputs("FRE_RESNET50_TAPS")) return {Verdict::kSkip, *why};
  const auto manifest = *env_path("FRE_RESNET50_TAPS");
  const auto ids = fre::BackboneSpec::from_manifest(manifest).layer_ids();
  if (ids.size() != 4) return {Verdict::kFail, "manifest must list exactly 4 taps, has " + std::to_string(ids.size())};
  testutil::TempDir work;
  std::vector<double> pro(4, 0.0);
  for (std::size_t k = 0; k < 4; ++k) {
    std::cout << "  layer " << ids[k] << "\n";
    for (const auto& c : kCategories) pro[k] += run_category(manifest, c, {ids[k]}, work / ids[k]).pro.value_or(0);
    pro[k] *= 100.0 / static_cast<double>(kCategories.size());
  }
  const bool ok = pro[1] >= pro[2] && pro[2] > pro[0] && pro[0] > pro[3];
  return {ok ? Verdict::kPass : Verdict::kFail, "pro layer1..4 = " + fmt(pro[0], 4) + ", " + fmt(pro[1], 4) + ", " +
                                                    fmt(pro[2], 4) + ", " + fmt(pro[3], 4) +
                                                    " (want layer2 >= layer3 > layer1 > layer4)"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    bool required;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "subspace algebra", true, subspace_algebra},
      {2, "fre correctness", true, fre_correctness},
      {3, "metrics oracles", true, metrics_oracles},
      {4, "synthetic end-to-end", true, synthetic_end_to_end},
      {5, "throughput contract", true, throughput},
      {6, "resnet18 image auroc", false, resnet18_detection},
      {7, "resnet18 3-layer segmentation", false, resnet18_segmentation},
      {8, "resnet50 layer ordering", false, resnet50_layer_order},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {Verdict::kFail, std::string("error: ") + e.what()};
    }
    const char* tag = out.verdict == Verdict::kPass ? "PASS" : out.verdict == Verdict::kFail ? "FAIL" : "SKIP";
    std::cout << tag << " " << c.id << " " << c.name << (c.required ? "" : " (optional)") << ": " << out.detail
              << std::endl;
    if (out.verdict == Verdict::kFail) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
