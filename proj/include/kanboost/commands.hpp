#pragma once

// Pipeline commands behind the `kanboost` tool. Each command reads its inputs from
// an ExperimentConfig, writes its artifacts, logs a human-readable summary to `log`
// and throws kanboost::Error on failure.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanboost/config.hpp"
#include "kanboost/error.hpp"
#include "kanboost/kan.hpp"
#include "kanboost/model_io.hpp"
#include "kanboost/prefetch.hpp"
#include "kanboost/sim.hpp"
#include "kanboost/trace.hpp"
#include "kanboost/train.hpp"

namespace kanboost {

// Reference figures for annotating reports: maximum IPC improvement over no
// prefetching (percent) and per-sample inference time (ns).
struct ReferenceFigure {
  const char* prefetcher;
  double max_ipc_improvement_percent;
};
inline constexpr ReferenceFigure kReferenceIpc[] = {
    {"KANBoost", 2.5}, {"Best Offset", 60.0}, {"TransforMAP", 63.0}, {"Voyager", 41.6}, {"Drishyam", 60.0}};
inline constexpr double kReferenceKanBoostInferenceNs = 1000.0;
inline constexpr double kReferenceVoyagerInferenceNs = 18000.0;

namespace detail {

inline std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.empty()) throw ConfigError("no output path given (use --out)");
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, mode);
  if (!out) throw IoError(path, "cannot open for writing");
  return out;
}

inline void finish_output(std::ofstream& out, const std::string& path) {
  if (!out.flush()) throw IoError(path, "write failed");
}

inline const std::string& first_set(const std::string& a, const std::string& b, const char* what) {
  if (!a.empty()) return a;
  if (!b.empty()) return b;
  throw ConfigError(std::string("no ") + what + " path given");
}

inline std::vector<Sample> read_samples_file(const std::string& path, std::size_t expected_window) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open dataset file");
  std::size_t window = 0;
  std::vector<Sample> samples;
  try {
    samples = read_samples_csv(in, &window);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.field(), path + ": " + e.what());
  }
  if (window != expected_window)
    throw DatasetError(path + ": dataset has " + std::to_string(window) + " feature columns, expected K=" +
                       std::to_string(expected_window));
  return samples;
}

inline std::string stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

}  // namespace detail

// ---------------------------------------------------------------------------

struct PreprocessResult {
  std::size_t samples = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::map<int, std::size_t> delta_histogram;  // label delta -> count
};

inline PreprocessResult cmd_preprocess(const ExperimentConfig& config, std::ostream& log) {
  const auto& trace_path = config.trace();
  const auto trace = read_trace_file(trace_path);
  const auto samples = collect_samples(trace, config.dataset);

  PreprocessResult result;
  result.samples = samples.size();
  for (const auto& s : samples) ++result.delta_histogram[decode_delta_class(s.label, config.dataset.layout)];
  if (samples.size() >= 2) {
    const auto split = split_samples(samples, config.dataset.split_fraction);
    result.train_samples = split.train.size();
    result.test_samples = split.test.size();
  }

  const auto& out_path = detail::first_set(config.out, config.dataset_path, "dataset output");
  auto out = detail::open_output(out_path);
  write_samples_csv(out, samples, config.dataset.window);
  detail::finish_output(out, out_path);

  log << "trace: " << trace_path << " (" << trace.size() << " accesses)\n";
  log << "samples: " << result.samples << " (train " << result.train_samples << ", test " << result.test_samples
      << ")\n";
  if (samples.size() < 2)
    log << "warning: only " << samples.size()
        << " labeled sample(s); a dataset needs at least 2. Pages need K+1 deltas to produce a sample.\n";
  if (!result.delta_histogram.empty()) {
    log << "next-delta histogram (delta: count, share):\n";
    for (const auto& [delta, count] : result.delta_histogram)
      log << "  " << delta << ": " << count << " ("
          << 100.0 * static_cast<double>(count) / static_cast<double>(result.samples) << "%)\n";
  }
  log << "wrote " << out_path << '\n';
  return result;
}

// ---------------------------------------------------------------------------

struct TrainResult {
  TrainReport report;
  std::string model_path;
  std::string loss_curve_path;
  std::string summary_path;
};

inline nlohmann::json to_json(const TrainReport& report, const ExperimentConfig& config) {
  return {{"steps", report.losses.size()},
          {"final_loss", report.losses.empty() ? 0.0 : report.losses.back().total},
          {"final_reg_loss", report.losses.empty() ? 0.0 : report.losses.back().regularization},
          {"train_accuracy", report.train_accuracy},
          {"test_accuracy", report.test_accuracy},
          {"test_loss", report.test_loss},
          {"train_samples", report.train_samples},
          {"test_samples", report.test_samples},
          {"widths", config.model_widths()},
          {"grid", config.grid_intervals},
          {"spline_degree", config.spline_degree},
          {"seed", config.train.seed},
          {"learning_rate", config.train.learning_rate},
          {"batch_size", config.train.batch_size},
          {"lambda", config.train.lambda_weight},
          {"lambda_entropy", config.train.lambda_entropy}};
}

inline TrainResult cmd_train(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  std::vector<Sample> samples;
  if (!config.dataset_path.empty()) {
    samples = detail::read_samples_file(config.dataset_path, config.dataset.window);
  } else {
    samples = collect_samples(read_trace_file(config.trace()), config.dataset);
  }
  const auto dataset = split_samples(std::move(samples), config.dataset.split_fraction);

  auto model = KanModel::initialized(config.model_widths(), config.grid(), config.train.seed);
  TrainResult result;
  result.report = train(model, dataset, config.train);

  result.model_path = detail::first_set(config.out, config.model_path, "model output");
  save_model(result.model_path, model);

  result.loss_curve_path = result.model_path + ".loss.csv";
  {
    auto out = detail::open_output(result.loss_curve_path);
    write_loss_curve_csv(out, result.report);
    detail::finish_output(out, result.loss_curve_path);
  }
  result.summary_path = result.model_path + ".report.json";
  {
    auto out = detail::open_output(result.summary_path);
    out << to_json(result.report, config).dump(2) << '\n';
    detail::finish_output(out, result.summary_path);
  }

  log << "trained " << config.train.steps << " steps on " << result.report.train_samples << " samples in "
      << result.report.wall_seconds << " s\n";
  log << "final loss " << result.report.losses.back().total << " (regularization "
      << result.report.losses.back().regularization << ")\n";
  log << "train accuracy " << result.report.train_accuracy << ", test accuracy " << result.report.test_accuracy
      << " on " << result.report.test_samples << " samples\n";
  log << "wrote " << result.model_path << ", " << result.loss_curve_path << ", " << result.summary_path << '\n';
  return result;
}

// ---------------------------------------------------------------------------

inline std::unique_ptr<Prefetcher> make_prefetcher(PrefetcherKind kind, const ExperimentConfig& config,
                                                   std::shared_ptr<const KanModel> model = nullptr) {
  switch (kind) {
    case PrefetcherKind::none: return nullptr;
    case PrefetcherKind::next_line: return std::make_unique<NextLinePrefetcher>(config.dataset.layout);
    case PrefetcherKind::best_offset: return std::make_unique<BestOffsetPrefetcher>(config.dataset.layout);
    case PrefetcherKind::kanboost: {
      if (!model) model = std::make_shared<const KanModel>(load_model(detail::first_set(config.model_path, "", "model")));
      if (model->input_dim() != config.dataset.window)
        throw ConfigError("model input width " + std::to_string(model->input_dim()) + " does not match K=" +
                          std::to_string(config.dataset.window));
      return std::make_unique<KanBoostPredictor>(std::move(model), config.dataset.layout,
                                                 config.dataset.history_capacity);
    }
  }
  throw ConfigError("unknown prefetcher");
}

struct GenerateResult {
  std::size_t candidates = 0;
  std::string path;
};

inline GenerateResult cmd_generate(const ExperimentConfig& config, std::ostream& log) {
  if (config.prefetcher == PrefetcherKind::none) throw ConfigError("generate needs a prefetcher other than 'none'");
  auto prefetcher = make_prefetcher(config.prefetcher, config);
  GenerateResult result;
  result.path = detail::first_set(config.out, config.prefetch_path, "prefetch output");
  const auto parent = std::filesystem::path(result.path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  result.candidates = run_prefetcher(config.trace(), *prefetcher, result.path);
  log << to_string(config.prefetcher) << ": wrote " << result.candidates << " prefetch candidates to " << result.path
      << '\n';
  return result;
}

// ---------------------------------------------------------------------------

inline void log_report(std::ostream& log, const std::string& label, const EvalReport& r) {
  log << label << ": accesses " << r.demand_accesses << ", misses " << r.demand_misses_baseline << " -> "
      << r.demand_misses_with_prefetch << ", prefetches issued " << r.prefetches_issued << " (useful "
      << r.prefetches_useful << "), accuracy " << r.accuracy << ", coverage " << r.coverage << '\n';
}

inline EvalReport cmd_simulate(const ExperimentConfig& config, std::ostream& log) {
  const auto trace = read_trace_file(config.trace());
  std::vector<PrefetchCandidate> prefetches;
  if (!config.prefetch_path.empty()) prefetches = read_prefetch_file(config.prefetch_path);
  const auto report = evaluate(trace, prefetches, config.cache);

  const std::string label =
      detail::stem(config.trace()) + ":" + (config.prefetch_path.empty() ? "none" : detail::stem(config.prefetch_path));
  if (const auto& path = config.out.empty() ? config.report_path : config.out; !path.empty()) {
    auto out = detail::open_output(path);
    auto json = to_json(report);
    json["trace"] = config.trace();
    json["prefetch_file"] = config.prefetch_path;
    json["cache"] = {{"capacity", config.cache.capacity},
                     {"associativity", config.cache.associativity},
                     {"block_size", config.cache.block_size},
                     {"latency_cycles", config.cache.latency_cycles}};
    out << json.dump(2) << '\n';
    detail::finish_output(out, path);
    log << "wrote " << path << '\n';
  }
  if (!config.csv_path.empty()) append_eval_csv(config.csv_path, label, report);
  log_report(log, label, report);
  return report;
}

// ---------------------------------------------------------------------------

struct ComparisonRow {
  std::string trace;
  PrefetcherKind prefetcher;
  EvalReport report;
};

struct CompareResult {
  std::vector<ComparisonRow> rows;
  std::string table_path;
  std::string chart_path;
};

// Evaluates every selected prefetcher on every trace. Writes comparison.csv (one row per
// pair, plus optional reference rows) and chart_data.csv (coverage in percent, one
// series per prefetcher, one bar per trace) into the output directory.
inline CompareResult cmd_compare(const ExperimentConfig& config, std::ostream& log) {
  if (config.traces.empty()) throw ConfigError("compare needs at least one --trace");
  if (config.compare.empty()) throw ConfigError("compare needs at least one prefetcher");
  const std::filesystem::path out_dir = config.out.empty() ? std::filesystem::path(".") : std::filesystem::path(config.out);
  std::filesystem::create_directories(out_dir);

  std::shared_ptr<const KanModel> model;
  if (std::find(config.compare.begin(), config.compare.end(), PrefetcherKind::kanboost) != config.compare.end())
    model = std::make_shared<const KanModel>(load_model(detail::first_set(config.model_path, "", "model")));

  CompareResult result;
  for (const auto& trace_path : config.traces) {
    const auto trace = read_trace_file(trace_path);
    for (auto kind : config.compare) {
      std::vector<PrefetchCandidate> candidates;
      if (auto prefetcher = make_prefetcher(kind, config, model))
        for (const auto& access : trace)
          if (auto c = prefetcher->step(access)) candidates.push_back(*c);
      result.rows.push_back({detail::stem(trace_path), kind, evaluate(trace, candidates, config.cache)});
      log_report(log, result.rows.back().trace + ":" + to_string(kind), result.rows.back().report);
    }
  }

  result.table_path = (out_dir / "comparison.csv").string();
  {
    auto out = detail::open_output(result.table_path);
    out.precision(17);
    out << "source,trace,prefetcher,demand_accesses,demand_misses_baseline,demand_misses_with_prefetch,"
           "prefetches_issued,prefetches_useful,accuracy,coverage,reference_max_ipc_improvement_percent\n";
    for (const auto& row : result.rows) {
      const auto& r = row.report;
      out << "measured," << row.trace << ',' << to_string(row.prefetcher) << ',' << r.demand_accesses << ','
          << r.demand_misses_baseline << ',' << r.demand_misses_with_prefetch << ',' << r.prefetches_issued << ','
          << r.prefetches_useful << ',' << r.accuracy << ',' << r.coverage << ",\n";
    }
    if (config.annotate_reference)
      for (const auto& ref : kReferenceIpc)
        out << "reference,," << ref.prefetcher << ",,,,,,,," << ref.max_ipc_improvement_percent << '\n';
    detail::finish_output(out, result.table_path);
  }

  result.chart_path = (out_dir / "chart_data.csv").string();
  {
    auto out = detail::open_output(result.chart_path);
    out.precision(17);
    out << "series,trace,coverage_percent\n";
    for (auto kind : config.compare)
      for (const auto& row : result.rows)
        if (row.prefetcher == kind) out << to_string(kind) << ',' << row.trace << ',' << 100.0 * row.report.coverage << '\n';
    detail::finish_output(out, result.chart_path);
  }
  log << "wrote " << result.table_path << ", " << result.chart_path << '\n';
  return result;
}

// ---------------------------------------------------------------------------

struct BenchResult {
  LatencyReport latency;
  std::vector<std::size_t> widths;
};

inline BenchResult cmd_bench(const ExperimentConfig& config, std::ostream& log) {
  const auto model = config.model_path.empty()
                         ? KanModel::initialized(config.model_widths(), config.grid(), config.train.seed)
                         : load_model(config.model_path);
  BenchResult result{measure_inference_latency(model, config.bench_samples, config.dataset.layout, config.train.seed),
                     model.widths()};

  std::ostringstream widths;
  for (std::size_t i = 0; i < result.widths.size(); ++i) widths << (i ? "," : "") << result.widths[i];
  log << "model widths [" << widths.str() << "], " << model.parameter_count() << " parameters, "
      << result.latency.samples << " forward passes\n";
  log << "inference ns/sample: mean " << result.latency.mean_ns << ", p50 " << result.latency.p50_ns << ", p99 "
      << result.latency.p99_ns << '\n';
  log << "  reference: KANBoost " << kReferenceKanBoostInferenceNs << " ns, Voyager " << kReferenceVoyagerInferenceNs
      << " ns per sample (different hardware; not comparable one-to-one)\n";
  log << "IPC improvement: not modeled (the simulator has no core timing model); reference KANBoost "
      << kReferenceIpc[0].max_ipc_improvement_percent << "% over no prefetching\n";

  if (!config.out.empty()) {
    auto out = detail::open_output(config.out);
    nlohmann::json json = {{"widths", result.widths},
                           {"samples", result.latency.samples},
                           {"mean_ns", result.latency.mean_ns},
                           {"p50_ns", result.latency.p50_ns},
                           {"p99_ns", result.latency.p99_ns},
                           {"reference_kanboost_ns", kReferenceKanBoostInferenceNs},
                           {"reference_voyager_ns", kReferenceVoyagerInferenceNs},
                           {"reference_kanboost_max_ipc_improvement_percent", kReferenceIpc[0].max_ipc_improvement_percent},
                           {"ipc_modeled", false}};
    out << json.dump(2) << '\n';
    detail::finish_output(out, config.out);
  }
  return result;
}

}  // namespace kanboost
