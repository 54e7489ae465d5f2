#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kanboost/commands.hpp"
#include "kanboost/synthetic.hpp"

using namespace kanboost;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("kanboost_cmd_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_trace_file(const std::string& path, const std::vector<MemoryAccess>& trace) {
  std::ofstream out(path);
  write_trace(out, trace);
}

const char* kWorkedExample =
    "0, 0, 0x1000, 0x400, 0\n1, 1, 0x1000, 0x400, 0\n2, 2, 0x10c0, 0x400, 0\n"
    "3, 3, 0x1000, 0x400, 0\n4, 4, 0x1040, 0x400, 0\n5, 5, 0x1180, 0x400, 0\n";

struct RunResult {
  int status;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(KANBOOST_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string output;
  char buffer[512];
  while (std::fgets(buffer, sizeof buffer, pipe)) output += buffer;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, output};
}

}  // namespace

TEST(Config, DefaultsMatchTheReferenceSetup) {
  const auto c = resolve_config({}, {});
  EXPECT_EQ(c.dataset.window, 5u);
  EXPECT_EQ(c.dataset.split_fraction, 0.8);
  EXPECT_EQ(c.dataset.history_capacity, 4096u);
  EXPECT_EQ(c.model_widths(), (std::vector<std::size_t>{5, 64, 128}));
  EXPECT_EQ(c.grid_intervals, 4u);
  EXPECT_EQ(c.spline_degree, 6u);
  EXPECT_EQ(c.train.steps, 1000u);
  EXPECT_EQ(c.train.lambda_weight, 0.01);
  EXPECT_EQ(c.train.lambda_entropy, 8.5);
  EXPECT_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.train.seed, 0u);
  EXPECT_EQ(c.cache.capacity, 2u << 20);
}

TEST(Config, ParsesSectionsAndComments) {
  const auto v = parse_config_text("# comment\n[train]\nsteps = 50 \n; other\n[trace]\nk=4\n");
  EXPECT_EQ(v.at("train.steps"), "50");
  EXPECT_EQ(v.at("trace.k"), "4");
  EXPECT_THROW(parse_config_text("[train]\nsteps\n"), ConfigError);
}

TEST(Config, FlagBeatsFileBeatsDefault) {
  const auto file = parse_config_text("[train]\nsteps = 50\nlambda = 0.5\n");
  const auto c = resolve_config(file, {{"train.steps", "7"}});
  EXPECT_EQ(c.train.steps, 7u);
  EXPECT_EQ(c.train.lambda_weight, 0.5);
  EXPECT_EQ(c.train.lambda_entropy, 8.5);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(resolve_config({{"train.stepz", "1"}}, {}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"train.steps", "0"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"train.steps", "ten"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"trace.skip_llc_hits", "maybe"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"model.widths", "4,64,128"}}), ConfigError);
  EXPECT_THROW(resolve_config({}, {{"run.prefetcher", "voyager"}}), ConfigError);
}

TEST(Config, EveryListedKeyIsAccepted) {
  for (const auto& key : config_keys()) {
    ExperimentConfig c;
    std::string value = "1";
    if (key == "model.widths") value = "5,8,128";
    if (key.rfind("paths.", 0) == 0) value = "x";
    if (key == "run.prefetcher" || key == "run.compare") value = "next_line";
    if (key == "trace.split_fraction") value = "0.5";
    EXPECT_NO_THROW(apply_config_value(c, key, value)) << key;
  }
}

TEST(Preprocess, WorkedExampleHasNoSamples) {
  TempDir dir;
  std::ofstream(dir / "ex.trace") << kWorkedExample;
  auto c = resolve_config({}, {{"paths.trace", dir / "ex.trace"}, {"paths.out", dir / "ex.csv"}});
  std::ostringstream log;
  const auto r = cmd_preprocess(c, log);
  EXPECT_EQ(r.samples, 0u);
  EXPECT_NE(log.str().find("warning"), std::string::npos);
  EXPECT_EQ(slurp(dir / "ex.csv"), "delta_1,delta_2,delta_3,delta_4,delta_5,label\n");
}

TEST(Preprocess, StrideHistogramIsConcentrated) {
  TempDir dir;
  write_trace_file(dir / "s.trace", synthetic::constant_stride(2000, 2));
  auto c = resolve_config({}, {{"paths.trace", dir / "s.trace"}, {"paths.out", dir / "s.csv"}});
  std::ostringstream log;
  const auto r = cmd_preprocess(c, log);
  ASSERT_EQ(r.delta_histogram.size(), 1u);
  EXPECT_EQ(r.delta_histogram.begin()->first, 2);
  EXPECT_EQ(r.train_samples + r.test_samples, r.samples);
  std::ifstream in(dir / "s.csv");
  std::size_t window = 0;
  EXPECT_EQ(read_samples_csv(in, &window).size(), r.samples);
  EXPECT_EQ(window, 5u);
}

TEST(Train, WritesModelLossCurveAndReport) {
  TempDir dir;
  write_trace_file(dir / "s.trace", synthetic::constant_stride(1000, 1));
  auto c = resolve_config({}, {{"paths.trace", dir / "s.trace"}, {"paths.out", dir / "m.kan"}, {"train.steps", "5"}});
  std::ostringstream log;
  const auto r = cmd_train(c, log);
  EXPECT_EQ(load_model(r.model_path).widths(), (std::vector<std::size_t>{5, 64, 128}));
  std::ifstream loss(r.loss_curve_path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(loss, line)) ++lines;
  EXPECT_EQ(lines, 6u);
  const auto j = nlohmann::json::parse(slurp(r.summary_path));
  EXPECT_EQ(j["train_samples"].get<std::size_t>() + j["test_samples"].get<std::size_t>(), r.report.train_samples + r.report.test_samples);
}

TEST(Train, SameSeedGivesIdenticalModelFiles) {
  TempDir dir;
  write_trace_file(dir / "s.trace", synthetic::interleaved_strides(1500, std::vector<int>{1, 3}));
  std::ostringstream log;
  for (const char* name : {"a.kan", "b.kan"})
    cmd_train(resolve_config({}, {{"paths.trace", dir / "s.trace"}, {"paths.out", dir / name}, {"train.steps", "3"}}), log);
  EXPECT_EQ(slurp(dir / "a.kan"), slurp(dir / "b.kan"));
  EXPECT_EQ(slurp(dir / "a.kan.report.json"), slurp(dir / "b.kan.report.json"));
  cmd_train(resolve_config({}, {{"paths.trace", dir / "s.trace"}, {"paths.out", dir / "c.kan"}, {"train.steps", "3"},
                                {"train.seed", "1"}}),
            log);
  EXPECT_NE(slurp(dir / "a.kan"), slurp(dir / "c.kan"));
}

TEST(Generate, RejectsModelWithWrongWindow) {
  TempDir dir;
  save_model(dir / "k4.kan", KanModel({4, 8, 128}, SplineGrid(4, 6)));
  write_trace_file(dir / "s.trace", synthetic::constant_stride(100, 1));
  auto c = resolve_config({}, {{"paths.trace", dir / "s.trace"}, {"paths.model", dir / "k4.kan"}, {"paths.out", dir / "p"}});
  std::ostringstream log;
  EXPECT_THROW(cmd_generate(c, log), ConfigError);
}

TEST(Simulate, ReportAndCsv) {
  TempDir dir;
  write_trace_file(dir / "s.trace", synthetic::constant_stride(3000, 1));
  std::ostringstream log;
  cmd_generate(resolve_config({}, {{"paths.trace", dir / "s.trace"}, {"run.prefetcher", "next_line"},
                                   {"paths.out", dir / "s.prefetch"}}),
               log);
  const auto r = cmd_simulate(resolve_config({}, {{"paths.trace", dir / "s.trace"}, {"paths.prefetch", dir / "s.prefetch"},
                                                  {"paths.out", dir / "r.json"}, {"paths.csv", dir / "r.csv"}}),
                              log);
  EXPECT_GT(r.coverage, 0.9);
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(j["demand_misses_with_prefetch"].get<std::uint64_t>(), r.demand_misses_with_prefetch);
  EXPECT_EQ(j["cache"]["capacity"], 2u << 20);
  EXPECT_EQ(slurp(dir / "r.csv").rfind(kEvalCsvHeader, 0), 0u);
}

TEST(Compare, TableChartAndReferenceRows) {
  TempDir dir;
  write_trace_file(dir / "stride.trace", synthetic::constant_stride(4000, 1));
  std::ostringstream log;
  cmd_train(resolve_config({}, {{"paths.trace", dir / "stride.trace"}, {"paths.out", dir / "m.kan"}, {"train.steps", "100"}}),
            log);
  const auto r = cmd_compare(resolve_config({}, {{"paths.trace", dir / "stride.trace"}, {"paths.model", dir / "m.kan"},
                                                 {"run.compare", "next_line,best_offset,kanboost"},
                                                 {"run.annotate_reference", "true"}, {"paths.out", dir / "cmp"}}),
                             log);
  ASSERT_EQ(r.rows.size(), 3u);
  for (const auto& row : r.rows) EXPECT_GT(row.report.coverage, 0.0) << to_string(row.prefetcher);

  std::istringstream table(slurp(r.table_path));
  std::string line;
  std::size_t measured = 0, reference = 0;
  while (std::getline(table, line)) {
    if (line.rfind("measured,", 0) == 0) ++measured;
    if (line.rfind("reference,", 0) == 0) ++reference;
  }
  EXPECT_EQ(measured, 3u);
  EXPECT_EQ(reference, std::size(kReferenceIpc));

  std::istringstream chart(slurp(r.chart_path));
  std::getline(chart, line);
  EXPECT_EQ(line, "series,trace,coverage_percent");
  std::size_t bars = 0;
  while (std::getline(chart, line)) ++bars;
  EXPECT_EQ(bars, 3u);
}

TEST(Bench, PrintsMeasuredAndReferenceLatency) {
  std::ostringstream log;
  const auto r = cmd_bench(resolve_config({}, {{"run.bench_samples", "1000"}}), log);
  EXPECT_EQ(r.latency.samples, 1000u);
  EXPECT_NE(log.str().find("1000 ns"), std::string::npos);
  EXPECT_NE(log.str().find("not modeled"), std::string::npos);
}

TEST(Cli, MissingTraceFailsWithMessage) {
  const auto r = run_cli("preprocess --trace /nonexistent/file.trace --out /tmp/kanboost_unused.csv");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("/nonexistent/file.trace"), std::string::npos);
}

TEST(Cli, RejectsZeroSteps) {
  const auto r = run_cli("train --trace x --steps 0");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("steps"), std::string::npos);
}

TEST(Cli, UnknownSubcommandFails) { EXPECT_NE(run_cli("frobnicate").status, 0); }

TEST(Cli, ConfigFileWithFlagOverride) {
  TempDir dir;
  write_trace_file(dir / "s.trace", synthetic::constant_stride(500, 1));
  std::ofstream(dir / "run.ini") << "[paths]\ntrace = " << (dir / "s.trace") << "\nout = " << (dir / "a.prefetch")
                                 << "\n[run]\nprefetcher = next_line\n";
  const auto r = run_cli("generate --config " + (dir / "run.ini") + " --out " + (dir / "b.prefetch"));
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_FALSE(fs::exists(dir / "a.prefetch"));
  EXPECT_TRUE(fs::exists(dir / "b.prefetch"));
}
