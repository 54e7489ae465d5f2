// kanboost: preprocess traces, train the KAN delta predictor, generate prefetch
// files and evaluate prefetchers on a trace-driven LLC model.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kanboost/commands.hpp"
#include "kanboost/config.hpp"

namespace {

// Flag values collected as config keys so the file/flag precedence is applied in one place.
struct FlagSet {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::string> traces;

  void bind(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help);
  }
};

void add_common(CLI::App* cmd, FlagSet& flags) {
  cmd->add_option("--config", flags.config_path, "Config file ([section] key = value)");
  cmd->add_option("--trace", flags.traces, "Trace file(s)");
  flags.bind(cmd, "--model", "paths.model", "Model file");
  flags.bind(cmd, "--out", "paths.out", "Primary output path");
  flags.bind(cmd, "--seed", "train.seed", "Random seed (default 0)");
  flags.bind(cmd, "--layout-page-bits", "trace.page_bits", "log2 page size in bytes (default 12)");
  flags.bind(cmd, "--layout-block-bits", "trace.block_bits", "log2 block size in bytes (default 6)");
  flags.bind(cmd, "--k", "trace.k", "History window K (default 5)");
  flags.bind(cmd, "--history-capacity", "trace.history_capacity", "Pages tracked by the history buffer");
  flags.bind(cmd, "--skip-llc-hits", "trace.skip_llc_hits", "Ignore records flagged as LLC hits (true/false)");
}

void add_model_shape(CLI::App* cmd, FlagSet& flags) {
  flags.bind(cmd, "--widths", "model.widths", "Layer widths, e.g. 5,64,128");
  flags.bind(cmd, "--grid", "model.grid", "Spline grid intervals (default 4)");
  flags.bind(cmd, "--spline-degree", "model.spline_degree", "Spline degree k (default 6)");
}

void add_cache(CLI::App* cmd, FlagSet& flags) {
  flags.bind(cmd, "--cache-capacity", "cache.capacity", "LLC capacity in bytes (default 2 MiB)");
  flags.bind(cmd, "--cache-ways", "cache.associativity", "LLC associativity (default 16)");
  flags.bind(cmd, "--cache-block", "cache.block_size", "LLC block size in bytes (default 64)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KAN-based delta prefetcher toolkit"};
  app.require_subcommand(1);
  FlagSet flags;

  auto* preprocess = app.add_subcommand("preprocess", "Build the delta dataset CSV from a trace");
  add_common(preprocess, flags);
  flags.bind(preprocess, "--split", "trace.split_fraction", "Train fraction (default 0.8)");

  auto* train = app.add_subcommand("train", "Train a KAN model on a dataset CSV or a trace");
  add_common(train, flags);
  add_model_shape(train, flags);
  flags.bind(train, "--dataset", "paths.dataset", "Dataset CSV from preprocess (otherwise built from --trace)");
  flags.bind(train, "--split", "trace.split_fraction", "Train fraction (default 0.8)");
  flags.bind(train, "--steps", "train.steps", "Adam steps (default 1000)");
  flags.bind(train, "--lambda", "train.lambda", "Regularization weight (default 0.01)");
  flags.bind(train, "--lambda-entropy", "train.lambda_entropy", "Entropy regularization weight (default 8.5)");
  flags.bind(train, "--lr", "train.learning_rate", "Learning rate (default 1e-3)");
  flags.bind(train, "--batch-size", "train.batch_size", "Mini-batch size (default 256)");

  auto* generate = app.add_subcommand("generate", "Write a prefetch file for a trace");
  add_common(generate, flags);
  flags.bind(generate, "--prefetcher", "run.prefetcher", "kanboost | next_line | best_offset");

  auto* simulate = app.add_subcommand("simulate", "Replay a trace with an optional prefetch file");
  add_common(simulate, flags);
  add_cache(simulate, flags);
  flags.bind(simulate, "--prefetch", "paths.prefetch", "Prefetch file ('instr_id address_hex' lines)");
  flags.bind(simulate, "--csv", "paths.csv", "Append a CSV row to this file");

  auto* compare = app.add_subcommand("compare", "Evaluate several prefetchers over one or more traces");
  add_common(compare, flags);
  add_cache(compare, flags);
  flags.bind(compare, "--prefetchers", "run.compare", "Comma-separated list (default none,next_line,best_offset,kanboost)");
  flags.bind(compare, "--annotate-reference", "run.annotate_reference", "Add published reference rows (true/false)");

  auto* bench = app.add_subcommand("bench", "Measure forward-pass latency");
  add_common(bench, flags);
  add_model_shape(bench, flags);
  flags.bind(bench, "--samples", "run.bench_samples", "Number of timed forward passes (>= 1000)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!flags.traces.empty()) {
      std::string joined;
      for (const auto& t : flags.traces) joined += (joined.empty() ? "" : ",") + t;
      flags.values["paths.trace"] = joined;
    }
    const auto file_values = flags.config_path.empty() ? kanboost::ConfigValues{}
                                                       : kanboost::read_config_file(flags.config_path);
    const auto config = kanboost::resolve_config(file_values, flags.values);

    if (preprocess->parsed()) kanboost::cmd_preprocess(config, std::cout);
    else if (train->parsed()) kanboost::cmd_train(config, std::cout);
    else if (generate->parsed()) kanboost::cmd_generate(config, std::cout);
    else if (simulate->parsed()) kanboost::cmd_simulate(config, std::cout);
    else if (compare->parsed()) kanboost::cmd_compare(config, std::cout);
    else if (bench->parsed()) kanboost::cmd_bench(config, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
