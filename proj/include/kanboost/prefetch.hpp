#pragma once

// Prefetch candidate generation: the KAN delta predictor and two heuristic
// baselines, plus the "instr_id address_hex" prefetch file format.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "kanboost/error.hpp"
#include "kanboost/kan.hpp"
#include "kanboost/trace.hpp"

namespace kanboost {

struct PrefetchCandidate {
  std::uint64_t instr_id = 0;
  std::uint64_t address = 0;

  friend bool operator==(const PrefetchCandidate&, const PrefetchCandidate&) = default;
};

// Block-aligned address `delta` blocks away from `at`, or nothing if that leaves the page.
inline std::optional<std::uint64_t> same_page_target(const DecomposedAddress& at, int delta,
                                                     const AddressLayout& layout) {
  const auto target = static_cast<std::int64_t>(at.block_index) + delta;
  if (target < 0 || target >= static_cast<std::int64_t>(layout.blocks_per_page())) return std::nullopt;
  return recompose_address({at.page_id, static_cast<std::uint64_t>(target), 0}, layout);
}

class Prefetcher {
 public:
  virtual ~Prefetcher() = default;
  virtual std::optional<PrefetchCandidate> step(const MemoryAccess& access) = 0;
};

// ---------------------------------------------------------------------------

class KanBoostPredictor final : public Prefetcher {
 public:
  KanBoostPredictor(std::shared_ptr<const KanModel> model, AddressLayout layout = {},
                    std::size_t history_capacity = HistoryBuffer::kDefaultCapacity)
      : model_(std::move(model)), layout_(layout), history_(layout, model_ ? model_->input_dim() : 1, history_capacity) {
    if (!model_) throw ConfigError("predictor needs a model");
    if (model_->output_dim() < layout_.delta_class_count())
      throw DimensionError("model output width " + std::to_string(model_->output_dim()) + " is smaller than the " +
                           std::to_string(layout_.delta_class_count()) + " delta classes of this layout");
  }

  std::optional<PrefetchCandidate> step(const MemoryAccess& access) override {
    const auto parts = decompose_address(access.address, layout_);
    const auto obs = history_.observe(parts);
    if (!obs.window) return std::nullopt;
    const auto delta = predict_delta(*obs.window);
    if (!delta || *delta == 0) return std::nullopt;
    const auto target = same_page_target(parts, *delta, layout_);
    if (!target) return std::nullopt;
    return PrefetchCandidate{access.instr_id, *target};
  }

  // Most likely next delta for a full window; nothing when the winning class is padding.
  std::optional<int> predict_delta(const DeltaWindow& window) const {
    const auto logits = model_forward(*model_, normalize_window(window, layout_));
    const auto cls = argmax(logits);
    if (cls >= layout_.delta_class_count()) return std::nullopt;
    return decode_delta_class(cls, layout_);
  }

  const KanModel& model() const { return *model_; }
  const HistoryBuffer& history() const { return history_; }

 private:
  std::shared_ptr<const KanModel> model_;
  AddressLayout layout_;
  HistoryBuffer history_;
};

class NextLinePrefetcher final : public Prefetcher {
 public:
  explicit NextLinePrefetcher(AddressLayout layout = {}) : layout_(layout) { layout_.validate(); }

  std::optional<PrefetchCandidate> step(const MemoryAccess& access) override {
    const auto target = same_page_target(decompose_address(access.address, layout_), 1, layout_);
    if (!target) return std::nullopt;
    return PrefetchCandidate{access.instr_id, *target};
  }

 private:
  AddressLayout layout_;
};

// Simplified best-offset: each access tests one candidate offset against a window of
// recent block addresses; after every candidate has been tested once (a round) the
// highest-scoring offset is adopted if it reaches the threshold.
class BestOffsetPrefetcher final : public Prefetcher {
 public:
  struct Options {
    int max_offset = 8;
    std::size_t recent_capacity = 64;
    std::uint32_t score_threshold = 1;
    int initial_offset = 1;
  };

  explicit BestOffsetPrefetcher(AddressLayout layout = {}) : BestOffsetPrefetcher(layout, Options{}) {}

  BestOffsetPrefetcher(AddressLayout layout, Options options) : layout_(layout), options_(options) {
    layout_.validate();
    if (options_.max_offset < 1 || options_.recent_capacity == 0)
      throw ConfigError("best-offset needs max_offset >= 1 and a non-empty recent-request window");
    // Ordered by |offset|, positive first, so the first maximum is the preferred tie winner.
    for (int d = 1; d <= options_.max_offset; ++d) {
      offsets_.push_back(d);
      offsets_.push_back(-d);
    }
    if (std::find(offsets_.begin(), offsets_.end(), options_.initial_offset) == offsets_.end())
      throw ConfigError("initial offset must be one of the candidate offsets");
    scores_.assign(offsets_.size(), 0);
    current_ = options_.initial_offset;
  }

  std::optional<PrefetchCandidate> step(const MemoryAccess& access) override {
    const auto block = access.address >> layout_.block_bits;

    const auto candidate = offsets_[test_index_];
    const auto base = static_cast<std::int64_t>(block) - candidate;
    if (base >= 0 && recent_set_.contains(static_cast<std::uint64_t>(base))) ++scores_[test_index_];
    if (++test_index_ == offsets_.size()) finish_round();
    remember(block);

    const auto target =
        same_page_target(decompose_address(access.address, layout_), current_, layout_);
    if (!target) return std::nullopt;
    return PrefetchCandidate{access.instr_id, *target};
  }

  int current_offset() const { return current_; }
  std::size_t rounds_completed() const { return rounds_; }
  const std::vector<int>& candidate_offsets() const { return offsets_; }
  const std::vector<std::uint32_t>& scores() const { return scores_; }

 private:
  void finish_round() {
    const auto best = std::max_element(scores_.begin(), scores_.end());  // first maximum
    if (*best >= options_.score_threshold) current_ = offsets_[static_cast<std::size_t>(best - scores_.begin())];
    std::fill(scores_.begin(), scores_.end(), 0);
    test_index_ = 0;
    ++rounds_;
  }

  void remember(std::uint64_t block) {
    if (recent_set_.contains(block)) return;
    recent_.push_back(block);
    recent_set_.insert(block);
    if (recent_.size() > options_.recent_capacity) {
      recent_set_.erase(recent_.front());
      recent_.pop_front();
    }
  }

  AddressLayout layout_;
  Options options_;
  std::vector<int> offsets_;
  std::vector<std::uint32_t> scores_;
  std::size_t test_index_ = 0;
  std::size_t rounds_ = 0;
  int current_ = 1;
  std::deque<std::uint64_t> recent_;
  std::unordered_set<std::uint64_t> recent_set_;
};

// ---------------------------------------------------------------------------
// Prefetch files

inline void write_prefetch_line(std::ostream& out, const PrefetchCandidate& c) {
  out << c.instr_id << " 0x" << std::hex << c.address << std::dec << '\n';
}

// Streams `trace`, writing one line per candidate in trace order. Returns the count.
inline std::size_t run_prefetcher(std::istream& trace, Prefetcher& prefetcher, std::ostream& out) {
  std::size_t count = 0;
  for_each_access(trace, [&](const MemoryAccess& access) {
    if (const auto c = prefetcher.step(access)) {
      write_prefetch_line(out, *c);
      ++count;
    }
  });
  return count;
}

inline std::size_t run_prefetcher(const std::vector<MemoryAccess>& trace, Prefetcher& prefetcher, std::ostream& out) {
  std::size_t count = 0;
  for (const auto& access : trace)
    if (const auto c = prefetcher.step(access)) {
      write_prefetch_line(out, *c);
      ++count;
    }
  return count;
}

inline std::size_t run_prefetcher(const std::string& trace_path, Prefetcher& prefetcher, const std::string& out_path) {
  std::ifstream in(trace_path);
  if (!in) throw IoError(trace_path, "cannot open trace file");
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError(out_path, "cannot open prefetch file for writing");
  std::size_t count = 0;
  try {
    count = run_prefetcher(in, prefetcher, out);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.field(), trace_path + ": " + e.what());
  }
  if (!out.flush()) throw IoError(out_path, "write failed");
  return count;
}

inline std::size_t run_kanboost(const std::string& trace_path, KanBoostPredictor& predictor,
                                const std::string& out_path) {
  return run_prefetcher(trace_path, predictor, out_path);
}

inline std::vector<PrefetchCandidate> read_prefetch_file(std::istream& in) {
  std::vector<PrefetchCandidate> candidates;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto space = body.find_first_of(" \t");
    if (space == std::string_view::npos) throw ParseError(line_number, 0, "expected 'instr_id address_hex'");
    const auto id = detail::parse_unsigned(body.substr(0, space), 10, line_number, 1);
    const auto addr = detail::parse_unsigned(body.substr(space + 1), 16, line_number, 2);
    candidates.push_back({id, addr});
  }
  return candidates;
}

inline std::vector<PrefetchCandidate> read_prefetch_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open prefetch file");
  try {
    return read_prefetch_file(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.field(), path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Inference latency

struct LatencyReport {
  std::size_t samples = 0;
  double mean_ns = 0.0;
  double p50_ns = 0.0;
  double p99_ns = 0.0;
};

inline constexpr std::size_t kMinLatencySamples = 1000;

// Times model_forward alone on random in-range windows.
inline LatencyReport measure_inference_latency(const KanModel& model, std::size_t sample_count,
                                               const AddressLayout& layout = {}, std::uint64_t seed = 0) {
  if (sample_count < kMinLatencySamples)
    throw ConfigError("latency measurement needs at least " + std::to_string(kMinLatencySamples) + " samples");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> delta(-layout.max_delta(), layout.max_delta());
  std::vector<std::vector<double>> inputs(sample_count);
  for (auto& in : inputs) {
    DeltaWindow w(model.input_dim());
    for (auto& d : w) d = delta(rng);
    in = normalize_window(w, layout);
  }

  std::vector<double> ns(sample_count);
  volatile double sink = 0.0;
  for (std::size_t s = 0; s < sample_count; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto logits = model_forward(model, inputs[s]);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + logits.front();
    ns[s] = std::max(1.0, std::chrono::duration<double, std::nano>(t1 - t0).count());
  }

  LatencyReport report;
  report.samples = sample_count;
  double total = 0.0;
  for (double v : ns) total += v;
  report.mean_ns = total / static_cast<double>(sample_count);
  std::sort(ns.begin(), ns.end());
  const auto pct = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sample_count))) - 1;
    return ns[std::min(idx, sample_count - 1)];
  };
  report.p50_ns = pct(0.50);
  report.p99_ns = pct(0.99);
  return report;
}

}  // namespace kanboost
