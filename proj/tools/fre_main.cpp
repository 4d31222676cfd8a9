#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fre/config.hpp"
#include "fre/error.hpp"
#include "fre/fixture.hpp"
#include "fre/pipeline.hpp"

namespace {

// Keeps the error report on one line with the message as a quoted string.
std::string quoted(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out;
}

// Flags shared by the pipeline commands; each one overrides the config file.
struct Flags {
  std::string config;
  std::string dataset;
  std::string layout;
  std::string backbone;
  std::string features;
  std::string bundle;
  std::vector<std::string> layers;
  std::string score_layer;
  std::optional<double> variance;
  std::string out;
  bool heatmaps = false;
  bool any_layer_count = false;
  std::optional<int> workers;
  std::string reduction;
  std::string resize;
  std::string normalization;
  std::optional<double> smoothing;
  std::optional<int> warmup;
  std::optional<int> iterations;
  std::optional<int> threads;
  std::vector<std::string> images;
};

void add_flags(CLI::App* cmd, Flags& f, const std::string& name) {
  cmd->add_option("--config", f.config, "TOML run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--dataset", f.dataset, "category root with train/ and test/");
  cmd->add_option("--layout", f.layout, "dataset layout: mvtec or mtd");
  cmd->add_option("--backbone", f.backbone, "tap manifest (taps.json) of an ONNX backbone");
  cmd->add_option("--bundle", f.bundle, "model bundle (.freb)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--layers", f.layers, "layer ids, comma separated")->delimiter(',');
  if (name == "extract") return;
  cmd->add_option("--features", f.features, "pre-extracted feature directory");
  cmd->add_option("--score-layer", f.score_layer, "layer whose FRE is the image score");
  cmd->add_flag("--any-layer-count", f.any_layer_count, "allow fusion over any number of layers");
  cmd->add_option("--workers", f.workers, "worker threads for scoring");
  if (name == "fit") {
    cmd->add_option("--variance", f.variance, "retained variance threshold in (0, 1]");
    cmd->add_option("--reduction", f.reduction, "channel reduction: abs_mean or signed_mean");
    cmd->add_option("--resize", f.resize, "map upsampling: bilinear or nearest");
    cmd->add_option("--normalization", f.normalization, "per-layer map normalization: none or minmax");
    cmd->add_option("--smoothing", f.smoothing, "Gaussian sigma applied to fused maps, 0 = off");
  }
  if (name == "eval") cmd->add_flag("--heatmaps", f.heatmaps, "write heatmap PNG and NPY files");
  if (name == "score") cmd->add_option("images", f.images, "images to score");
  if (name == "bench") {
    cmd->add_option("--warmup", f.warmup, "warmup iterations (>= 10)");
    cmd->add_option("--iterations", f.iterations, "measured iterations (>= 100)");
    cmd->add_option("--threads", f.threads, "inference threads");
  }
}

fre::RunConfig resolve(const std::string& command, const Flags& f) {
  fre::RunConfig c;
  if (!f.config.empty()) fre::apply_toml_file(c, f.config);
  c.command = command;
  if (!f.dataset.empty()) c.dataset = f.dataset;
  if (!f.layout.empty()) c.layout = fre::parse_layout(f.layout);
  if (!f.backbone.empty()) c.backbone = f.backbone;
  if (!f.features.empty()) c.features = f.features;
  if (!f.bundle.empty()) c.bundle = f.bundle;
  if (!f.layers.empty()) c.layers = f.layers;
  if (!f.score_layer.empty()) c.score_layer = f.score_layer;
  if (f.variance) c.variance = *f.variance;
  if (!f.out.empty()) c.out = f.out;
  if (f.heatmaps) c.heatmaps = true;
  if (f.any_layer_count) c.any_layer_count = true;
  if (f.workers) c.workers = *f.workers;
  if (!f.reduction.empty()) c.map_options.reduction = fre::parse_channel_reduction(f.reduction);
  if (!f.resize.empty()) c.map_options.resize = fre::parse_interpolation(f.resize);
  if (!f.normalization.empty()) c.map_options.normalization = fre::parse_map_normalization(f.normalization);
  if (f.smoothing) c.map_options.smoothing_sigma = *f.smoothing;
  if (f.warmup) c.bench.warmup = *f.warmup;
  if (f.iterations) c.bench.iterations = *f.iterations;
  if (f.threads) c.bench.threads = *f.threads;
  if (!f.images.empty()) c.images.assign(f.images.begin(), f.images.end());
  if (command == "eval" || command == "score" || command == "bench") {
    if (c.bundle.empty()) c.bundle = c.out / "model.freb";
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature reconstruction error anomaly detection"};
  app.require_subcommand(1);

  Flags flags;
  std::vector<std::pair<std::string, CLI::App*>> commands;
  for (const char* name : {"extract", "fit", "score", "eval", "bench"}) {
    static const std::map<std::string, std::string> help = {
        {"extract", "run the backbone over a dataset and write a feature directory"},
        {"fit", "fit per-layer subspace models and write a bundle"},
        {"score", "score images and write heatmaps"},
        {"eval", "evaluate a bundle on the test split"},
        {"bench", "measure per-stage latency and throughput"}};
    auto* cmd = app.add_subcommand(name, help.at(name));
    add_flags(cmd, flags, name);
    commands.emplace_back(name, cmd);
  }

  std::string fixture_out;
  bool tiny = false;
  bool with_dataset = false;
  auto* make_fixture = app.add_subcommand("make-fixture", "write the built-in ONNX fixture backbone");
  make_fixture->add_option("--out", fixture_out, "output directory")->required();
  make_fixture->add_flag("--tiny", tiny, "two-convolution 32x32 graph instead of the benchmark graph");
  make_fixture->add_flag("--with-dataset", with_dataset, "also write a synthetic category under <out>/dataset");

  CLI11_PARSE(app, argc, argv);

  try {
    if (make_fixture->parsed()) {
      const auto spec = tiny ? fre::tiny_fixture() : fre::bench_fixture();
      const auto backbone = fre::write_fixture(spec, std::filesystem::path(fixture_out) / "backbone");
      std::cout << "wrote " << backbone.onnx_path.string() << "\n";
      if (with_dataset) {
        fre::SyntheticDatasetSpec ds;
        ds.size = static_cast<int>(spec.input_size);
        fre::write_synthetic_dataset(ds, std::filesystem::path(fixture_out) / "dataset");
        std::cout << "wrote " << (std::filesystem::path(fixture_out) / "dataset").string() << "\n";
      }
      return 0;
    }
    for (const auto& [name, cmd] : commands) {
      if (!cmd->parsed()) continue;
      const auto config = resolve(name, flags);
      if (name == "extract") fre::cmd_extract(config, &std::cout);
      if (name == "fit") fre::cmd_fit(config, &std::cout);
      if (name == "score") fre::cmd_score(config, &std::cout);
      if (name == "eval") fre::cmd_eval(config, &std::cout);
      if (name == "bench") fre::cmd_bench(config, &std::cout);
    }
  } catch (const fre::Error& e) {
    std::cerr << "error: code=" << fre::error_code_name(e.code()) << " message=\"" << quoted(e.what()) << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: code=internal message=\"" << quoted(e.what()) << "\"\n";
    return 1;
  }
  return 0;
}
