#pragma once

// Experiment configuration: built-in defaults, a flat "[section] key = value" file
// format, and command-line overrides. Later sources win:
//   built-in default < config file < command-line flag.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kanboost/error.hpp"
#include "kanboost/sim.hpp"
#include "kanboost/trace.hpp"
#include "kanboost/train.hpp"

namespace kanboost {

enum class PrefetcherKind { none, next_line, best_offset, kanboost };

inline std::string to_string(PrefetcherKind kind) {
  switch (kind) {
    case PrefetcherKind::none: return "none";
    case PrefetcherKind::next_line: return "next_line";
    case PrefetcherKind::best_offset: return "best_offset";
    case PrefetcherKind::kanboost: return "kanboost";
  }
  return "unknown";
}

inline PrefetcherKind parse_prefetcher_kind(std::string_view name) {
  for (auto kind : {PrefetcherKind::none, PrefetcherKind::next_line, PrefetcherKind::best_offset,
                    PrefetcherKind::kanboost})
    if (name == to_string(kind)) return kind;
  throw ConfigError("unknown prefetcher '" + std::string(name) + "' (expected none, next_line, best_offset or kanboost)");
}

struct ExperimentConfig {
  DatasetConfig dataset;

  // Input width always follows the history window K; empty means {K, 64, 128},
  // widened at the output if the layout has more delta classes.
  std::vector<std::size_t> widths;
  std::size_t grid_intervals = 4;
  std::size_t spline_degree = 6;
  TrainConfig train;

  CacheConfig cache;

  std::vector<std::string> traces;
  std::string dataset_path;
  std::string model_path;
  std::string prefetch_path;
  std::string report_path;
  std::string csv_path;
  std::string out;

  PrefetcherKind prefetcher = PrefetcherKind::kanboost;
  std::vector<PrefetcherKind> compare = {PrefetcherKind::none, PrefetcherKind::next_line,
                                         PrefetcherKind::best_offset, PrefetcherKind::kanboost};
  bool annotate_reference = false;
  std::size_t bench_samples = 10000;

  const std::string& trace() const {
    if (traces.empty()) throw ConfigError("no trace given (use --trace)");
    return traces.front();
  }

  std::vector<std::size_t> model_widths() const {
    if (!widths.empty()) return widths;
    return {dataset.window, 64, std::max<std::size_t>(128, dataset.layout.delta_class_count())};
  }

  SplineGrid grid() const { return SplineGrid(grid_intervals, spline_degree); }

  void validate() const {
    dataset.validate();
    train.validate();
    cache.validate();
    const auto w = model_widths();
    if (w.size() < 2) throw ConfigError("model widths need at least input and output layers");
    if (w.front() != dataset.window)
      throw ConfigError("model input width " + std::to_string(w.front()) + " must equal the window size K=" +
                        std::to_string(dataset.window));
    if (w.back() < dataset.layout.delta_class_count())
      throw ConfigError("model output width " + std::to_string(w.back()) + " is smaller than the " +
                        std::to_string(dataset.layout.delta_class_count()) + " delta classes");
    if (grid_intervals == 0) throw ConfigError("grid size must be at least 1");
    if (std::find(w.begin(), w.end(), std::size_t{0}) != w.end()) throw ConfigError("model widths must be positive");
  }
};

using ConfigValues = std::map<std::string, std::string>;

// Parses "[section]" headers and "key = value" lines into "section.key" entries.
// '#' and ';' start comments.
inline ConfigValues parse_config_text(std::string_view text) {
  ConfigValues values;
  std::string section;
  std::size_t line_number = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_number;
    std::string_view line = raw;
    if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_number) + ": unterminated section");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_number) + ": expected 'key = value'");
    const auto key = std::string(detail::trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_number) + ": empty key");
    values[section.empty() ? key : section + "." + key] = std::string(detail::trim(line.substr(eq + 1)));
  }
  return values;
}

inline ConfigValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config_text(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || end != text.data() + text.size())
    throw ConfigError("invalid value '" + text + "' for " + key);
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto item = trim(rest.substr(0, comma));
    if (!item.empty()) items.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return items;
}

}  // namespace detail

// Every key understood in config files and by the command-line overrides.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "trace.page_bits",     "trace.block_bits",    "trace.k",
      "trace.split_fraction", "trace.history_capacity", "trace.skip_llc_hits",
      "model.widths",        "model.grid",          "model.spline_degree",
      "train.steps",         "train.lambda",        "train.lambda_entropy",
      "train.learning_rate", "train.batch_size",    "train.seed",
      "cache.capacity",      "cache.associativity", "cache.block_size",
      "cache.latency",       "paths.trace",         "paths.dataset",
      "paths.model",         "paths.prefetch",      "paths.report",
      "paths.csv",           "paths.out",           "run.prefetcher",
      "run.compare",         "run.annotate_reference", "run.bench_samples"};
  return keys;
}

inline void apply_config_value(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_number;
  if (key == "trace.page_bits") c.dataset.layout.page_bits = parse_number<unsigned>(key, v);
  else if (key == "trace.block_bits") c.dataset.layout.block_bits = parse_number<unsigned>(key, v);
  else if (key == "trace.k") c.dataset.window = parse_number<std::size_t>(key, v);
  else if (key == "trace.split_fraction") c.dataset.split_fraction = parse_number<double>(key, v);
  else if (key == "trace.history_capacity") c.dataset.history_capacity = parse_number<std::size_t>(key, v);
  else if (key == "trace.skip_llc_hits") c.dataset.skip_llc_hits = detail::parse_bool(key, v);
  else if (key == "model.widths") {
    c.widths.clear();
    for (const auto& item : detail::split_list(v)) c.widths.push_back(parse_number<std::size_t>(key, item));
  } else if (key == "model.grid") c.grid_intervals = parse_number<std::size_t>(key, v);
  else if (key == "model.spline_degree") c.spline_degree = parse_number<std::size_t>(key, v);
  else if (key == "train.steps") c.train.steps = parse_number<std::size_t>(key, v);
  else if (key == "train.lambda") c.train.lambda_weight = parse_number<double>(key, v);
  else if (key == "train.lambda_entropy") c.train.lambda_entropy = parse_number<double>(key, v);
  else if (key == "train.learning_rate") c.train.learning_rate = parse_number<double>(key, v);
  else if (key == "train.batch_size") c.train.batch_size = parse_number<std::size_t>(key, v);
  else if (key == "train.seed") c.train.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "cache.capacity") c.cache.capacity = parse_number<std::uint64_t>(key, v);
  else if (key == "cache.associativity") c.cache.associativity = parse_number<std::uint32_t>(key, v);
  else if (key == "cache.block_size") c.cache.block_size = parse_number<std::uint32_t>(key, v);
  else if (key == "cache.latency") c.cache.latency_cycles = parse_number<std::uint32_t>(key, v);
  else if (key == "paths.trace") c.traces = detail::split_list(v);
  else if (key == "paths.dataset") c.dataset_path = v;
  else if (key == "paths.model") c.model_path = v;
  else if (key == "paths.prefetch") c.prefetch_path = v;
  else if (key == "paths.report") c.report_path = v;
  else if (key == "paths.csv") c.csv_path = v;
  else if (key == "paths.out") c.out = v;
  else if (key == "run.prefetcher") c.prefetcher = parse_prefetcher_kind(v);
  else if (key == "run.compare") {
    c.compare.clear();
    for (const auto& item : detail::split_list(v)) c.compare.push_back(parse_prefetcher_kind(item));
  } else if (key == "run.annotate_reference") c.annotate_reference = detail::parse_bool(key, v);
  else if (key == "run.bench_samples") c.bench_samples = parse_number<std::size_t>(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

// Defaults, then file values, then flag values.
inline ExperimentConfig resolve_config(const ConfigValues& file_values, const ConfigValues& flag_values) {
  ExperimentConfig config;
  for (const auto& [key, value] : file_values) apply_config_value(config, key, value);
  for (const auto& [key, value] : flag_values) apply_config_value(config, key, value);
  config.validate();
  return config;
}

}  // namespace kanboost
