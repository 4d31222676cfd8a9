#include "fre/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "fre/error.hpp"

namespace fs = std::filesystem;

namespace fre {
namespace {

class LineParser {
 public:
  LineParser(std::string_view text, int line) : text_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kConfig, "config line " + std::to_string(line_) + ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_space();
    return pos_ >= text_.size() || text_[pos_] == '#';
  }

  bool consume(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string key() {
    skip_space();
    std::string out;
    while (true) {
      skip_space();
      if (pos_ < text_.size() && (text_[pos_] == '"' || text_[pos_] == '\'')) {
        out += quoted();
      } else {
        const auto start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' ||
                                       text_[pos_] == '-')) {
          ++pos_;
        }
        if (pos_ == start) fail("expected a key");
        out += text_.substr(start, pos_ - start);
      }
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == '.') {
        ++pos_;
        out += '.';
        continue;
      }
      return out;
    }
  }

  TomlValue value() {
    skip_space();
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"' || c == '\'') return {quoted()};
    if (c == '[') {
      ++pos_;
      std::vector<TomlValue> items;
      while (true) {
        skip_space();
        if (consume(']')) break;
        items.push_back(value());
        skip_space();
        if (consume(',')) continue;
        if (consume(']')) break;
        fail("expected ',' or ']' in array");
      }
      return {std::move(items)};
    }
    const auto start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' && text_[pos_] != '#' &&
           text_[pos_] != ' ' && text_[pos_] != '\t') {
      ++pos_;
    }
    std::string token(text_.substr(start, pos_ - start));
    if (token == "true") return {true};
    if (token == "false") return {false};
    std::string digits;
    for (char ch : token) {
      if (ch != '_') digits += ch;
    }
    if (digits.empty()) fail("empty value");
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits.find("inf") != std::string::npos ||
                          digits.find("nan") != std::string::npos;
    if (!is_float) {
      std::int64_t v = 0;
      const char* begin = digits.data() + (digits[0] == '+' ? 1 : 0);
      auto [ptr, ec] = std::from_chars(begin, digits.data() + digits.size(), v);
      if (ec != std::errc() || ptr != digits.data() + digits.size()) fail("bad integer '" + token + "'");
      return {v};
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(digits, &used);
      if (used != digits.size()) fail("bad number '" + token + "'");
      return {v};
    } catch (const std::logic_error&) {
      fail("bad number '" + token + "'");
    }
  }

 private:
  std::string quoted() {
    const char q = text_[pos_++];
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != q) {
      char c = text_[pos_++];
      if (q == '"' && c == '\\') {
        if (pos_ >= text_.size()) fail("dangling escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '\\': c = '\\'; break;
          case '"': c = '"'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string_view text_;
  int line_;
  std::size_t pos_ = 0;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string render_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + quote(items[i]);
  return out + "]";
}

std::string render_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  std::string s = os.str();
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

const std::string& TomlValue::as_string(const std::string& key) const {
  if (auto* s = std::get_if<std::string>(&value)) return *s;
  throw Error(ErrorCode::kConfig, "config key '" + key + "' must be a string");
}

double TomlValue::as_number(const std::string& key) const {
  if (auto* d = std::get_if<double>(&value)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  throw Error(ErrorCode::kConfig, "config key '" + key + "' must be a number");
}

std::int64_t TomlValue::as_integer(const std::string& key) const {
  if (auto* i = std::get_if<std::int64_t>(&value)) return *i;
  throw Error(ErrorCode::kConfig, "config key '" + key + "' must be an integer");
}

bool TomlValue::as_bool(const std::string& key) const {
  if (auto* b = std::get_if<bool>(&value)) return *b;
  throw Error(ErrorCode::kConfig, "config key '" + key + "' must be a boolean");
}

std::vector<std::string> TomlValue::as_string_list(const std::string& key) const {
  if (auto* s = std::get_if<std::string>(&value)) return {*s};
  const auto* list = std::get_if<std::vector<TomlValue>>(&value);
  if (!list) throw Error(ErrorCode::kConfig, "config key '" + key + "' must be a list of strings");
  std::vector<std::string> out;
  for (const auto& v : *list) out.push_back(v.as_string(key));
  return out;
}

std::map<std::string, TomlValue> parse_toml(const std::string& text) {
  std::map<std::string, TomlValue> out;
  std::istringstream in(text);
  std::string line;
  std::string table;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    LineParser p(line, number);
    if (p.at_end_or_comment()) continue;
    if (p.consume('[')) {
      table = p.key();
      if (!p.consume(']')) p.fail("expected ']' after table name");
      if (!p.at_end_or_comment()) p.fail("trailing characters after table header");
      continue;
    }
    std::string key = p.key();
    if (!p.consume('=')) p.fail("expected '=' after key");
    TomlValue v = p.value();
    if (!p.at_end_or_comment()) p.fail("trailing characters after value");
    if (!table.empty()) key = table + "." + key;
    if (out.contains(key)) p.fail("duplicate key '" + key + "'");
    out.emplace(std::move(key), std::move(v));
  }
  return out;
}

void apply_toml(RunConfig& c, const std::string& text) {
  for (const auto& [key, v] : parse_toml(text)) {
    if (key == "command") c.command = v.as_string(key);
    else if (key == "dataset") c.dataset = v.as_string(key);
    else if (key == "layout") c.layout = parse_layout(v.as_string(key));
    else if (key == "backbone") c.backbone = v.as_string(key);
    else if (key == "features") c.features = v.as_string(key);
    else if (key == "bundle") c.bundle = v.as_string(key);
    else if (key == "images") {
      c.images.clear();
      for (const auto& s : v.as_string_list(key)) c.images.emplace_back(s);
    }
    else if (key == "layers") c.layers = v.as_string_list(key);
    else if (key == "score_layer") c.score_layer = v.as_string(key);
    else if (key == "variance") c.variance = v.as_number(key);
    else if (key == "out") c.out = v.as_string(key);
    else if (key == "heatmaps") c.heatmaps = v.as_bool(key);
    else if (key == "any_layer_count") c.any_layer_count = v.as_bool(key);
    else if (key == "workers") c.workers = static_cast<int>(v.as_integer(key));
    else if (key == "map.reduction") c.map_options.reduction = parse_channel_reduction(v.as_string(key));
    else if (key == "map.resize") c.map_options.resize = parse_interpolation(v.as_string(key));
    else if (key == "map.normalization") c.map_options.normalization = parse_map_normalization(v.as_string(key));
    else if (key == "map.smoothing_sigma") c.map_options.smoothing_sigma = v.as_number(key);
    else if (key == "bench.warmup") c.bench.warmup = static_cast<int>(v.as_integer(key));
    else if (key == "bench.iterations") c.bench.iterations = static_cast<int>(v.as_integer(key));
    else if (key == "bench.threads") c.bench.threads = static_cast<int>(v.as_integer(key));
    else throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
  }
}

void apply_toml_file(RunConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_toml(config, text.str());
}

std::string render_toml(const RunConfig& c) {
  std::ostringstream os;
  os << "command = " << quote(c.command) << "\n";
  if (!c.dataset.empty()) os << "dataset = " << quote(c.dataset.string()) << "\n";
  os << "layout = " << quote(to_string(c.layout)) << "\n";
  if (!c.backbone.empty()) os << "backbone = " << quote(c.backbone.string()) << "\n";
  if (!c.features.empty()) os << "features = " << quote(c.features.string()) << "\n";
  if (!c.bundle.empty()) os << "bundle = " << quote(c.bundle.string()) << "\n";
  if (!c.images.empty()) {
    std::vector<std::string> images;
    for (const auto& p : c.images) images.push_back(p.string());
    os << "images = " << render_list(images) << "\n";
  }
  os << "layers = " << render_list(c.layers) << "\n";
  os << "score_layer = " << quote(c.score_layer) << "\n";
  os << "variance = " << render_double(c.variance) << "\n";
  os << "out = " << quote(c.out.string()) << "\n";
  os << "heatmaps = " << (c.heatmaps ? "true" : "false") << "\n";
  os << "any_layer_count = " << (c.any_layer_count ? "true" : "false") << "\n";
  os << "workers = " << c.workers << "\n";
  os << "\n[map]\n";
  os << "reduction = " << quote(to_string(c.map_options.reduction)) << "\n";
  os << "resize = " << quote(to_string(c.map_options.resize)) << "\n";
  os << "normalization = " << quote(to_string(c.map_options.normalization)) << "\n";
  os << "smoothing_sigma = " << render_double(c.map_options.smoothing_sigma) << "\n";
  os << "\n[bench]\n";
  os << "warmup = " << c.bench.warmup << "\n";
  os << "iterations = " << c.bench.iterations << "\n";
  os << "threads = " << c.bench.threads << "\n";
  return os.str();
}

void RunConfig::validate() const {
  static const std::set<std::string> commands = {"extract", "fit", "score", "eval", "bench"};
  if (!commands.contains(command)) throw Error(ErrorCode::kConfig, "unknown command '" + command + "'");
  const bool has_features = !features.empty();
  const bool has_live = !backbone.empty();
  if (command == "extract") {
    if (!has_live || dataset.empty()) throw Error(ErrorCode::kConfig, "extract needs --backbone and --dataset");
  } else if (command == "fit" || command == "eval") {
    if (has_features == has_live) {
      throw Error(ErrorCode::kConfig, "configure exactly one feature source: --features or --backbone");
    }
    if (has_live && dataset.empty()) throw Error(ErrorCode::kConfig, "--backbone needs --dataset");
  } else if (command == "score") {
    if (has_features == has_live) {
      throw Error(ErrorCode::kConfig, "configure exactly one feature source: --features or --backbone");
    }
    if (has_live && images.empty() && dataset.empty()) {
      throw Error(ErrorCode::kConfig, "score with --backbone needs input images or --dataset");
    }
  } else if (command == "bench") {
    if (!has_live) throw Error(ErrorCode::kConfig, "bench needs --backbone");
    if (bench.warmup < 10 || bench.iterations < 100) {
      throw Error(ErrorCode::kConfig, "bench needs at least 10 warmup and 100 measured iterations");
    }
    if (bench.threads < 1) throw Error(ErrorCode::kConfig, "bench threads must be positive");
  }
  if (command != "extract" && command != "fit" && bundle.empty()) {
    throw Error(ErrorCode::kConfig, command + " needs --bundle");
  }
  if (command == "fit" && !(variance > 0.0 && variance <= 1.0)) {
    throw Error(ErrorCode::kConfig, "--variance must lie in (0, 1]");
  }
  if (command != "extract" && !layers.empty() && !any_layer_count && layers.size() != 1 && layers.size() != 3) {
    throw Error(ErrorCode::kConfig, "use 1 or 3 fusion layers (pass --any-layer-count to allow " +
                                        std::to_string(layers.size()) + ")");
  }
  if (workers < 1) throw Error(ErrorCode::kConfig, "workers must be positive");
}

}  // namespace fre
