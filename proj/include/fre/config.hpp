#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fre/dataset.hpp"
#include "fre/options.hpp"
#include "fre/subspace.hpp"

namespace fre {

// Parsed value of the TOML subset used by run configs: strings, integers,
// floats, booleans and single-line arrays of those, under optional [tables].
struct TomlValue {
  std::variant<std::string, std::int64_t, double, bool, std::vector<TomlValue>> value;

  const std::string& as_string(const std::string& key) const;
  double as_number(const std::string& key) const;
  std::int64_t as_integer(const std::string& key) const;
  bool as_bool(const std::string& key) const;
  std::vector<std::string> as_string_list(const std::string& key) const;
};

// Keys are flattened to "table.key". Errors: kConfig with the line number.
std::map<std::string, TomlValue> parse_toml(const std::string& text);

struct BenchParams {
  int warmup = 10;
  int iterations = 100;
  int threads = 1;
};

/// Fully resolved settings for one CLI command.
struct RunConfig {
  std::string command;
  std::filesystem::path dataset;
  DatasetLayout layout = DatasetLayout::kMvtec;
  std::filesystem::path backbone;  // tap manifest
  std::filesystem::path features;  // pre-extracted feature directory
  std::filesystem::path bundle;
  std::vector<std::filesystem::path> images;
  std::vector<std::string> layers;  // fusion layers
  std::string score_layer;
  double variance = kDefaultVarianceThreshold;
  std::filesystem::path out = "fre_out";
  bool heatmaps = false;
  bool any_layer_count = false;
  int workers = 1;
  MapOptions map_options;
  BenchParams bench;

  // Command-specific checks, e.g. exactly one feature source for fit/eval.
  void validate() const;
};

// Applies a TOML file on top of `config`; unknown keys are errors.
void apply_toml(RunConfig& config, const std::string& text);
void apply_toml_file(RunConfig& config, const std::filesystem::path& path);
std::string render_toml(const RunConfig& config);

}  // namespace fre
