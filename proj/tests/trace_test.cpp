#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "kanboost/synthetic.hpp"
#include "kanboost/trace.hpp"

using namespace kanboost;

namespace {

// Page 1 blocks 0x00, 0x00, 0x03, 0x00, 0x01, 0x06 as byte addresses.
std::vector<std::uint64_t> worked_example_addresses() {
  const AddressLayout layout;
  std::vector<std::uint64_t> out;
  for (std::uint64_t b : {0x00, 0x00, 0x03, 0x00, 0x01, 0x06}) out.push_back(recompose_address({1, b, 0}, layout));
  return out;
}

std::vector<MemoryAccess> as_trace(const std::vector<std::uint64_t>& addresses) {
  std::vector<MemoryAccess> trace;
  for (std::size_t i = 0; i < addresses.size(); ++i) trace.push_back({i, i, addresses[i], 0x400, false});
  return trace;
}

}  // namespace

TEST(ParseTraceLine, MapsFields) {
  EXPECT_EQ(parse_trace_line("7, 120, 0x1000, 0x400, 0"), (MemoryAccess{7, 120, 0x1000, 0x400, false}));
  EXPECT_EQ(parse_trace_line("0, 0, 0, 0, 1"), (MemoryAccess{0, 0, 0, 0, true}));
  EXPECT_EQ(parse_trace_line("3,4,ABCDEF,0X10,1"), (MemoryAccess{3, 4, 0xABCDEF, 0x10, true}));
}

TEST(ParseTraceLine, InvalidHexNamesField) {
  try {
    parse_trace_line("7, 120, 0xZZ, 0x400, 0", 12);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 12u);
    EXPECT_EQ(e.field(), 3u);
  }
}

TEST(ParseTraceLine, Errors) {
  EXPECT_THROW(parse_trace_line(""), ParseError);
  EXPECT_THROW(parse_trace_line("   "), ParseError);
  EXPECT_THROW(parse_trace_line("1, 2, 0x3, 0x4"), ParseError);
  EXPECT_THROW(parse_trace_line("1, 2, 0x3, 0x4, 0, 9"), ParseError);
  EXPECT_THROW(parse_trace_line("x, 2, 0x3, 0x4, 0"), ParseError);
  EXPECT_THROW(parse_trace_line("1, 2, 0x3, 0x4, 2"), ParseError);
  EXPECT_THROW(parse_trace_line("1, 2, , 0x4, 0"), ParseError);
}

TEST(ReadTrace, SkipsCommentsAndRejectsDecreasingIds) {
  std::istringstream ok("# header\n1, 0, 0x40, 0x1, 0\n\n2, 5, 0x80, 0x1, 1\n");
  const auto trace = read_trace(ok);
  ASSERT_EQ(trace.size(), 2u);
  EXPECT_TRUE(trace[1].llc_hit);

  std::istringstream bad("5, 0, 0x40, 0x1, 0\n4, 0, 0x80, 0x1, 0\n");
  try {
    read_trace(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ReadTrace, MissingFileNamesPath) {
  try {
    read_trace_file("/nonexistent/trace.txt");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/trace.txt"), std::string::npos);
  }
}

TEST(DecomposeAddress, Examples) {
  const AddressLayout layout;
  EXPECT_EQ(decompose_address(0x1000, layout), (DecomposedAddress{1, 0, 0}));
  // 0x180 >> 6 == 6
  EXPECT_EQ(decompose_address(0x1180, layout), (DecomposedAddress{1, 6, 0}));
  EXPECT_EQ(decompose_address(0x1FFF, layout), (DecomposedAddress{1, 63, 63}));
}

TEST(DecomposeAddress, RoundTripsRandomAddresses) {
  std::mt19937_64 rng(1);
  for (const AddressLayout layout : {AddressLayout{}, AddressLayout{5, 13}, AddressLayout{7, 21}}) {
    for (int i = 0; i < 100000; ++i) {
      const auto a = rng();
      const auto parts = decompose_address(a, layout);
      ASSERT_LT(parts.block_index, layout.blocks_per_page());
      ASSERT_LT(parts.byte_offset, layout.block_size());
      ASSERT_EQ(recompose_address(parts, layout), a);
    }
  }
}

TEST(AddressLayout, Validation) {
  EXPECT_NO_THROW(AddressLayout{}.validate());
  EXPECT_EQ(AddressLayout{}.blocks_per_page(), 64u);
  EXPECT_THROW((AddressLayout{12, 12}.validate()), ConfigError);
  EXPECT_THROW((AddressLayout{0, 12}.validate()), ConfigError);
}

TEST(DeltaClass, Examples) {
  const AddressLayout layout;
  EXPECT_EQ(encode_delta_class(-63, layout), 0u);
  EXPECT_EQ(encode_delta_class(0, layout), 63u);
  EXPECT_EQ(encode_delta_class(5, layout), 68u);
  EXPECT_EQ(decode_delta_class(68, layout), 5);
  EXPECT_THROW(encode_delta_class(64, layout), EncodingError);
  EXPECT_THROW(encode_delta_class(-64, layout), EncodingError);
  EXPECT_THROW(decode_delta_class(127, layout), EncodingError);
}

TEST(DeltaClass, EncodeDecodeAreInverse) {
  const AddressLayout layout;
  for (int d = -63; d <= 63; ++d) EXPECT_EQ(decode_delta_class(encode_delta_class(d, layout), layout), d);
  for (std::size_t c = 0; c < layout.delta_class_count(); ++c)
    EXPECT_EQ(encode_delta_class(decode_delta_class(c, layout), layout), c);
}

TEST(NormalizeDelta, Examples) {
  const AddressLayout layout;
  EXPECT_EQ(normalize_delta(0, layout), 0.0);
  EXPECT_EQ(normalize_delta(63, layout), 1.0);
  EXPECT_EQ(normalize_delta(-63, layout), -1.0);
  EXPECT_DOUBLE_EQ(normalize_delta(-21, layout), -1.0 / 3.0);
  EXPECT_THROW(normalize_delta(100, layout), EncodingError);
}

TEST(HistoryBuffer, WorkedExampleDeltas) {
  HistoryBuffer history(AddressLayout{}, 5);
  std::vector<int> deltas;
  std::optional<DeltaWindow> window;
  const auto addresses = worked_example_addresses();
  for (std::size_t i = 0; i < addresses.size(); ++i) {
    const auto obs = history.observe_address(addresses[i]);
    if (i == 0) { EXPECT_FALSE(obs.delta.has_value()); }
    if (obs.delta) deltas.push_back(*obs.delta);
    if (i < 5) { EXPECT_FALSE(obs.window.has_value()); }
    window = obs.window;
    EXPECT_FALSE(obs.labeled_window.has_value());
  }
  EXPECT_EQ(deltas, (std::vector<int>{0, 3, -3, 1, 5}));
  ASSERT_TRUE(window.has_value());
  EXPECT_EQ(*window, (DeltaWindow{0, 3, -3, 1, 5}));
}

TEST(HistoryBuffer, ColdAndUnderfullPages) {
  HistoryBuffer history(AddressLayout{}, 5);
  const AddressLayout layout;
  auto obs = history.observe({9, 3, 0});
  EXPECT_FALSE(obs.delta);
  EXPECT_FALSE(obs.window);
  for (std::uint64_t b : {4, 5, 6}) obs = history.observe({9, b, 0});
  EXPECT_EQ(history.find(9)->deltas.size(), 3u);
  EXPECT_FALSE(obs.window);
  (void)layout;
}

TEST(HistoryBuffer, PagesKeepIndependentHistories) {
  HistoryBuffer history(AddressLayout{}, 2);
  history.observe({1, 10, 0});
  history.observe({2, 40, 0});
  const auto obs = history.observe({1, 12, 0});
  ASSERT_TRUE(obs.delta);
  EXPECT_EQ(*obs.delta, 2);
  EXPECT_EQ(*history.find(2)->last_block, 40u);
}

TEST(HistoryBuffer, EvictsLeastRecentlyTouchedPage) {
  HistoryBuffer history(AddressLayout{}, 5, 2);
  history.observe({1, 0, 0});
  history.observe({2, 0, 0});
  history.observe({1, 1, 0});  // page 2 is now least recent
  history.observe({3, 0, 0});
  EXPECT_EQ(history.size(), 2u);
  EXPECT_NE(history.find(1), nullptr);
  EXPECT_EQ(history.find(2), nullptr);
  EXPECT_NE(history.find(3), nullptr);
  // An evicted page starts cold again.
  EXPECT_FALSE(history.observe({2, 5, 0}).delta);
}

TEST(HistoryBuffer, DeltasStayInsidePageRange) {
  const AddressLayout layout;
  HistoryBuffer history(layout, 5, 16);
  const auto trace = synthetic::random_blocks(20000, 40, 7);
  for (const auto& a : trace) {
    const auto obs = history.observe_address(a.address);
    if (obs.delta) { ASSERT_LE(std::abs(*obs.delta), layout.max_delta()); }
    if (auto* page = history.find(decompose_address(a.address, layout).page_id)) { ASSERT_LE(page->deltas.size(), 5u); }
  }
}

TEST(BuildDataset, WorkedExampleHasNoLabeledSample) {
  const auto samples = collect_samples(as_trace(worked_example_addresses()), DatasetConfig{});
  EXPECT_TRUE(samples.empty());
  EXPECT_THROW(build_dataset(as_trace(worked_example_addresses()), DatasetConfig{}), DatasetError);
}

TEST(BuildDataset, WorkedExampleExtendedByOneAccess) {
  auto addresses = worked_example_addresses();
  addresses.push_back(recompose_address({1, 0x0B, 0}, AddressLayout{}));
  const auto samples = collect_samples(as_trace(addresses), DatasetConfig{});
  ASSERT_EQ(samples.size(), 1u);
  const std::vector<double> expected{0.0, 3.0 / 63, -3.0 / 63, 1.0 / 63, 5.0 / 63};
  EXPECT_EQ(samples[0].features, expected);
  EXPECT_EQ(samples[0].label, 68u);
}

TEST(BuildDataset, ConstantStrideLabelsAreAllTheStride) {
  // 70 accesses at stride 2 span pages of 32 accesses: 26 + 26 + 0 samples.
  const auto trace = synthetic::constant_stride(70, 2);
  const auto samples = collect_samples(trace, DatasetConfig{});
  EXPECT_EQ(samples.size(), 52u);
  for (const auto& s : samples) {
    EXPECT_EQ(s.label, encode_delta_class(2, AddressLayout{}));
    EXPECT_EQ(s.features.size(), 5u);
  }
}

TEST(BuildDataset, ChronologicalSplit) {
  const auto trace = synthetic::constant_stride(1000, 1);
  DatasetConfig config;
  const auto all = collect_samples(trace, config);
  const auto ds = build_dataset(trace, config);
  ASSERT_EQ(ds.train.size() + ds.test.size(), all.size());
  EXPECT_EQ(ds.train.size(), static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(all.size()))));
  EXPECT_EQ(ds.train.front(), all.front());
  EXPECT_EQ(ds.test.front(), all[ds.train.size()]);
}

TEST(BuildDataset, TwoSamplesStillLeaveATestSample) {
  const auto ds = split_samples({Sample{{0.0}, 1}, Sample{{0.0}, 2}}, 0.8);
  EXPECT_EQ(ds.train.size(), 1u);
  EXPECT_EQ(ds.test.size(), 1u);
}

TEST(BuildDataset, RejectsBadConfig) {
  const auto trace = synthetic::constant_stride(100, 1);
  DatasetConfig config;
  config.split_fraction = 1.0;
  EXPECT_THROW(build_dataset(trace, config), ConfigError);
  EXPECT_THROW(build_dataset({}, DatasetConfig{}), DatasetError);
}

TEST(BuildDataset, SkipLlcHitsFiltersRecords) {
  auto trace = synthetic::constant_stride(200, 1);
  for (std::size_t i = 0; i < trace.size(); i += 2) trace[i].llc_hit = true;
  DatasetConfig config;
  const auto all = collect_samples(trace, config);
  config.skip_llc_hits = true;
  const auto filtered = collect_samples(trace, config);
  EXPECT_LT(filtered.size(), all.size());
  for (const auto& s : filtered) EXPECT_EQ(s.label, encode_delta_class(2, AddressLayout{}));
}

TEST(BuildDataset, DeterministicCsvBytes) {
  const auto trace = synthetic::random_blocks(5000, 8, 3);
  std::ostringstream a, b;
  write_samples_csv(a, collect_samples(trace, DatasetConfig{}), 5);
  write_samples_csv(b, collect_samples(trace, DatasetConfig{}), 5);
  EXPECT_EQ(a.str(), b.str());
}

TEST(SamplesCsv, RoundTripsExactly) {
  const auto samples = collect_samples(synthetic::random_blocks(3000, 4, 11), DatasetConfig{});
  ASSERT_FALSE(samples.empty());
  std::stringstream csv;
  write_samples_csv(csv, samples, 5);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "delta_1,delta_2,delta_3,delta_4,delta_5,label");
  std::size_t window = 0;
  EXPECT_EQ(read_samples_csv(csv, &window), samples);
  EXPECT_EQ(window, 5u);
}

TEST(SamplesCsv, RejectsMalformedRows) {
  std::istringstream in("delta_1,label\n0.5,3\nabc,4\n");
  EXPECT_THROW(read_samples_csv(in), ParseError);
}
