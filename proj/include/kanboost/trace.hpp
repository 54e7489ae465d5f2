#pragma once

// Memory-trace parsing, address decomposition, the per-page global history
// buffer and delta dataset construction.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <list>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kanboost/error.hpp"

namespace kanboost {

struct MemoryAccess {
  std::uint64_t instr_id = 0;
  std::uint64_t cycle = 0;
  std::uint64_t address = 0;
  std::uint64_t pc = 0;
  bool llc_hit = false;

  friend bool operator==(const MemoryAccess&, const MemoryAccess&) = default;
};

struct AddressLayout {
  unsigned block_bits = 6;
  unsigned page_bits = 12;

  std::uint64_t block_size() const { return std::uint64_t{1} << block_bits; }
  std::uint64_t blocks_per_page() const { return std::uint64_t{1} << (page_bits - block_bits); }
  // Largest delta magnitude that fits inside one page.
  int max_delta() const { return static_cast<int>(blocks_per_page()) - 1; }
  // Number of distinct delta values, [-max_delta, +max_delta].
  std::size_t delta_class_count() const { return 2 * static_cast<std::size_t>(max_delta()) + 1; }

  void validate() const {
    if (block_bits == 0 || page_bits <= block_bits || page_bits >= 64)
      throw ConfigError("invalid address layout: need 0 < block_bits < page_bits < 64 (got block_bits=" +
                        std::to_string(block_bits) + ", page_bits=" + std::to_string(page_bits) + ")");
    if (page_bits - block_bits > 16)
      throw ConfigError("invalid address layout: more than 2^16 blocks per page");
  }

  friend bool operator==(const AddressLayout&, const AddressLayout&) = default;
};

struct DecomposedAddress {
  std::uint64_t page_id = 0;
  std::uint64_t block_index = 0;
  std::uint64_t byte_offset = 0;

  friend bool operator==(const DecomposedAddress&, const DecomposedAddress&) = default;
};

inline DecomposedAddress decompose_address(std::uint64_t address, const AddressLayout& layout) {
  return {address >> layout.page_bits, (address >> layout.block_bits) & (layout.blocks_per_page() - 1),
          address & (layout.block_size() - 1)};
}

inline std::uint64_t recompose_address(const DecomposedAddress& parts, const AddressLayout& layout) {
  return (parts.page_id << layout.page_bits) | (parts.block_index << layout.block_bits) | parts.byte_offset;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

inline std::uint64_t parse_unsigned(std::string_view text, int base, std::size_t line, std::size_t field) {
  text = trim(text);
  if (base == 16 && text.size() >= 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X'))
    text.remove_prefix(2);
  if (text.empty()) throw ParseError(line, field, "empty field");
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value, base);
  if (ec == std::errc::result_out_of_range) throw ParseError(line, field, "value out of range: '" + std::string(text) + "'");
  if (ec != std::errc{} || end != text.data() + text.size())
    throw ParseError(line, field,
                     std::string(base == 16 ? "invalid hexadecimal" : "invalid decimal") + " value '" +
                         std::string(text) + "'");
  return value;
}

}  // namespace detail

// Parses "instr_id, cycle, load_address_hex, pc_hex, hit_flag".
inline MemoryAccess parse_trace_line(std::string_view line, std::size_t line_number = 1) {
  if (detail::trim(line).empty()) throw ParseError(line_number, 0, "empty line");

  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (fields.size() != 5)
    throw ParseError(line_number, 0, "expected 5 comma-separated fields, found " + std::to_string(fields.size()));

  MemoryAccess access;
  access.instr_id = detail::parse_unsigned(fields[0], 10, line_number, 1);
  access.cycle = detail::parse_unsigned(fields[1], 10, line_number, 2);
  access.address = detail::parse_unsigned(fields[2], 16, line_number, 3);
  access.pc = detail::parse_unsigned(fields[3], 16, line_number, 4);
  const auto hit = detail::parse_unsigned(fields[4], 10, line_number, 5);
  if (hit > 1) throw ParseError(line_number, 5, "hit flag must be 0 or 1");
  access.llc_hit = hit == 1;
  return access;
}

// Streams a trace, skipping blank and '#' comment lines. Enforces non-decreasing instr_id.
inline void for_each_access(std::istream& in, const std::function<void(const MemoryAccess&)>& visit) {
  std::string line;
  std::size_t line_number = 0;
  std::optional<std::uint64_t> last_id;
  while (std::getline(in, line)) {
    ++line_number;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto access = parse_trace_line(body, line_number);
    if (last_id && access.instr_id < *last_id)
      throw ParseError(line_number, 1, "instr_id decreases (" + std::to_string(access.instr_id) + " after " +
                                           std::to_string(*last_id) + ")");
    last_id = access.instr_id;
    visit(access);
  }
}

inline std::vector<MemoryAccess> read_trace(std::istream& in) {
  std::vector<MemoryAccess> trace;
  for_each_access(in, [&](const MemoryAccess& a) { trace.push_back(a); });
  return trace;
}

inline std::vector<MemoryAccess> read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open trace file");
  try {
    return read_trace(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.field(), path + ": " + e.what());
  }
}

inline void write_trace(std::ostream& out, const std::vector<MemoryAccess>& trace) {
  for (const auto& a : trace)
    out << a.instr_id << ", " << a.cycle << ", 0x" << std::hex << a.address << ", 0x" << a.pc << std::dec << ", "
        << (a.llc_hit ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Delta encoding

inline void check_delta(int delta, const AddressLayout& layout) {
  if (delta < -layout.max_delta() || delta > layout.max_delta())
    throw EncodingError("delta " + std::to_string(delta) + " outside [" + std::to_string(-layout.max_delta()) +
                        ", " + std::to_string(layout.max_delta()) + "]");
}

inline std::size_t encode_delta_class(int delta, const AddressLayout& layout) {
  check_delta(delta, layout);
  return static_cast<std::size_t>(delta + layout.max_delta());
}

inline int decode_delta_class(std::size_t label, const AddressLayout& layout) {
  if (label >= layout.delta_class_count())
    throw EncodingError("class " + std::to_string(label) + " outside [0, " +
                        std::to_string(layout.delta_class_count()) + ")");
  return static_cast<int>(label) - layout.max_delta();
}

inline double normalize_delta(int delta, const AddressLayout& layout) {
  check_delta(delta, layout);
  return static_cast<double>(delta) / static_cast<double>(layout.max_delta());
}

// ---------------------------------------------------------------------------
// Global history buffer

using DeltaWindow = std::vector<int>;

struct PageHistory {
  std::optional<std::uint64_t> last_block;
  // Most recent deltas, oldest first; never longer than the window size.
  std::vector<int> deltas;
  std::uint64_t last_touch = 0;
};

struct Observation {
  // Delta between this access and the previous one on the same page.
  std::optional<int> delta;
  // Full window that preceded `delta`; together they form a labeled sample.
  std::optional<DeltaWindow> labeled_window;
  // Full window ending with `delta`; input for predicting the next delta.
  std::optional<DeltaWindow> window;
};

// Per-page block history with least-recently-touched eviction.
class HistoryBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 4096;

  HistoryBuffer(AddressLayout layout, std::size_t window, std::size_t capacity = kDefaultCapacity)
      : layout_(layout), window_(window), capacity_(capacity) {
    layout_.validate();
    if (window_ == 0) throw ConfigError("history window must be at least 1");
    if (capacity_ == 0) throw ConfigError("history buffer capacity must be at least 1");
  }

  Observation observe(const DecomposedAddress& access) {
    auto [it, inserted] = pages_.try_emplace(access.page_id);
    if (inserted) {
      if (pages_.size() > capacity_) evict_lru();
      lru_.push_front(access.page_id);
      it->second.lru_pos = lru_.begin();
    } else {
      lru_.splice(lru_.begin(), lru_, it->second.lru_pos);
    }
    auto& page = it->second.history;
    page.last_touch = ++clock_;

    Observation obs;
    if (page.last_block) {
      const int delta = static_cast<int>(access.block_index) - static_cast<int>(*page.last_block);
      obs.delta = delta;
      if (page.deltas.size() == window_) {
        obs.labeled_window = page.deltas;
        page.deltas.erase(page.deltas.begin());
      }
      page.deltas.push_back(delta);
      if (page.deltas.size() == window_) obs.window = page.deltas;
    }
    page.last_block = access.block_index;
    return obs;
  }

  Observation observe_address(std::uint64_t address) { return observe(decompose_address(address, layout_)); }

  const PageHistory* find(std::uint64_t page_id) const {
    const auto it = pages_.find(page_id);
    return it == pages_.end() ? nullptr : &it->second.history;
  }

  std::size_t size() const { return pages_.size(); }
  std::size_t window() const { return window_; }
  std::size_t capacity() const { return capacity_; }
  const AddressLayout& layout() const { return layout_; }

 private:
  struct Entry {
    PageHistory history;
    std::list<std::uint64_t>::iterator lru_pos;
  };

  void evict_lru() {
    // The page just inserted is not yet in lru_, so the back is the true LRU page.
    const auto victim = lru_.back();
    lru_.pop_back();
    pages_.erase(victim);
  }

  AddressLayout layout_;
  std::size_t window_;
  std::size_t capacity_;
  std::uint64_t clock_ = 0;
  std::unordered_map<std::uint64_t, Entry> pages_;
  std::list<std::uint64_t> lru_;
};

// ---------------------------------------------------------------------------
// Dataset

struct Sample {
  std::vector<double> features;  // normalized deltas, oldest first
  std::size_t label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

struct DatasetConfig {
  AddressLayout layout;
  std::size_t window = 5;
  double split_fraction = 0.8;
  std::size_t history_capacity = HistoryBuffer::kDefaultCapacity;
  bool skip_llc_hits = false;

  void validate() const {
    layout.validate();
    if (window == 0) throw ConfigError("window size K must be at least 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
      throw ConfigError("split fraction must lie strictly between 0 and 1");
  }
};

inline std::vector<double> normalize_window(const DeltaWindow& window, const AddressLayout& layout) {
  std::vector<double> features;
  features.reserve(window.size());
  for (int d : window) features.push_back(normalize_delta(d, layout));
  return features;
}

// All labeled samples in trace order, before splitting.
inline std::vector<Sample> collect_samples(const std::vector<MemoryAccess>& trace, const DatasetConfig& config) {
  config.validate();
  HistoryBuffer history(config.layout, config.window, config.history_capacity);
  std::vector<Sample> samples;
  for (const auto& access : trace) {
    if (config.skip_llc_hits && access.llc_hit) continue;
    const auto obs = history.observe_address(access.address);
    if (obs.labeled_window)
      samples.push_back({normalize_window(*obs.labeled_window, config.layout),
                         encode_delta_class(*obs.delta, config.layout)});
  }
  return samples;
}

// Chronological split. The train part takes ceil(fraction * n) samples but always
// leaves at least one sample for test.
inline Dataset split_samples(std::vector<Sample> samples, double split_fraction) {
  if (samples.size() < 2)
    throw DatasetError("need at least 2 samples to build a dataset, found " + std::to_string(samples.size()));
  auto n_train = static_cast<std::size_t>(std::ceil(split_fraction * static_cast<double>(samples.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, samples.size() - 1);
  Dataset dataset;
  dataset.test.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_train)),
                      std::make_move_iterator(samples.end()));
  samples.resize(n_train);
  dataset.train = std::move(samples);
  return dataset;
}

inline Dataset build_dataset(const std::vector<MemoryAccess>& trace, const DatasetConfig& config) {
  if (trace.empty()) throw DatasetError("trace is empty");
  return split_samples(collect_samples(trace, config), config.split_fraction);
}

// CSV with K feature columns and a label column, header row first.
inline void write_samples_csv(std::ostream& out, const std::vector<Sample>& samples, std::size_t window) {
  for (std::size_t i = 0; i < window; ++i) out << "delta_" << (i + 1) << ',';
  out << "label\n";
  out << std::setprecision(17);
  for (const auto& s : samples) {
    for (double f : s.features) out << f << ',';
    out << s.label << '\n';
  }
}

inline std::vector<Sample> read_samples_csv(std::istream& in, std::size_t* window_out = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, 0, "missing dataset header");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) throw ParseError(1, 0, "dataset header needs feature and label columns");
  const std::size_t window = columns - 1;
  if (window_out) *window_out = window;

  std::vector<Sample> samples;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (detail::trim(line).empty()) continue;
    Sample s;
    std::string_view rest = line;
    for (std::size_t c = 0; c < columns; ++c) {
      const auto comma = rest.find(',');
      if ((comma == std::string_view::npos) != (c + 1 == columns))
        throw ParseError(line_number, c + 1, "expected " + std::to_string(columns) + " columns");
      const auto cell = detail::trim(rest.substr(0, comma));
      if (c + 1 == columns) {
        s.label = detail::parse_unsigned(cell, 10, line_number, c + 1);
      } else {
        double value = 0.0;
        const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (cell.empty() || ec != std::errc{} || end != cell.data() + cell.size())
          throw ParseError(line_number, c + 1, "invalid real value '" + std::string(cell) + "'");
        s.features.push_back(value);
        rest.remove_prefix(comma + 1);
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace kanboost
