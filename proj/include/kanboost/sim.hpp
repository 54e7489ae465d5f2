#pragma once

// Trace-driven set-associative LRU last-level cache with prefetch injection.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanboost/error.hpp"
#include "kanboost/prefetch.hpp"
#include "kanboost/trace.hpp"

namespace kanboost {

struct CacheConfig {
  std::uint64_t capacity = 2ull << 20;
  std::uint32_t associativity = 16;
  std::uint32_t block_size = 64;
  // Metadata only; there is no timing model.
  std::uint32_t latency_cycles = 40;

  // 12 MiB, 16-way, 40-cycle shared LLC.
  static CacheConfig shared_llc() { return {12ull << 20, 16, 64, 40}; }

  std::uint64_t sets() const { return capacity / (std::uint64_t{associativity} * block_size); }

  void validate() const {
    if (associativity == 0 || block_size == 0 || capacity == 0) throw ConfigError("cache dimensions must be positive");
    if ((block_size & (block_size - 1)) != 0) throw ConfigError("cache block size must be a power of two");
    if (capacity % (std::uint64_t{associativity} * block_size) != 0)
      throw ConfigError("cache capacity must be a multiple of associativity * block size");
  }
};

struct AccessOutcome {
  bool hit = false;
  // Demand hit on a block that was prefetched and not yet touched.
  bool prefetch_hit = false;
  // A new line was allocated.
  bool filled = false;
  std::optional<std::uint64_t> evicted_block;
  bool evicted_unused_prefetch = false;
};

class Cache {
 public:
  explicit Cache(const CacheConfig& config) : config_(config) {
    config_.validate();
    sets_ = config_.sets();
    block_shift_ = static_cast<unsigned>(std::countr_zero(config_.block_size));
    lines_.resize(sets_ * config_.associativity);
  }

  // Demand hits promote to MRU and consume the prefetch flag; misses fill at MRU.
  // Prefetches of resident blocks change nothing.
  AccessOutcome access(std::uint64_t address, bool is_demand) {
    const std::uint64_t block = address >> block_shift_;
    const auto set = std::span<Line>(lines_).subspan((block % sets_) * config_.associativity, config_.associativity);
    AccessOutcome outcome;

    for (auto& line : set) {
      if (line.valid && line.block == block) {
        outcome.hit = true;
        if (is_demand) {
          outcome.prefetch_hit = line.unused_prefetch;
          line.unused_prefetch = false;
          line.stamp = ++clock_;
        }
        return outcome;
      }
    }

    auto victim = std::find_if(set.begin(), set.end(), [](const Line& l) { return !l.valid; });
    if (victim == set.end()) {
      victim = std::min_element(set.begin(), set.end(), [](const Line& a, const Line& b) { return a.stamp < b.stamp; });
      outcome.evicted_block = victim->block;
      outcome.evicted_unused_prefetch = victim->unused_prefetch;
    }
    *victim = Line{block, ++clock_, true, !is_demand};
    outcome.filled = true;
    return outcome;
  }

  bool contains(std::uint64_t address) const {
    const std::uint64_t block = address >> block_shift_;
    const auto set =
        std::span<const Line>(lines_).subspan((block % sets_) * config_.associativity, config_.associativity);
    return std::any_of(set.begin(), set.end(), [&](const Line& l) { return l.valid && l.block == block; });
  }

  const CacheConfig& config() const { return config_; }

 private:
  struct Line {
    std::uint64_t block = 0;
    std::uint64_t stamp = 0;
    bool valid = false;
    bool unused_prefetch = false;
  };

  CacheConfig config_;
  std::uint64_t sets_ = 0;
  unsigned block_shift_ = 0;
  std::uint64_t clock_ = 0;
  std::vector<Line> lines_;
};

struct EvalReport {
  std::uint64_t demand_accesses = 0;
  std::uint64_t demand_misses_baseline = 0;
  std::uint64_t demand_misses_with_prefetch = 0;
  std::uint64_t prefetch_candidates = 0;   // lines read from the prefetch file and injected
  std::uint64_t prefetches_issued = 0;     // candidates that filled a new line
  std::uint64_t prefetches_redundant = 0;  // candidates already resident
  std::uint64_t prefetches_useful = 0;
  double accuracy = 0.0;  // useful / issued; 0 when nothing was issued
  double coverage = 0.0;  // (baseline - with) / baseline; 0 when baseline has no misses

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline std::uint64_t count_demand_misses(std::span<const MemoryAccess> trace, const CacheConfig& config) {
  Cache cache(config);
  std::uint64_t misses = 0;
  for (const auto& a : trace)
    if (!cache.access(a.address, true).hit) ++misses;
  return misses;
}

// Replays `trace`; every candidate whose instr_id is strictly below the current access's
// instr_id is injected before that access.
inline EvalReport evaluate(std::span<const MemoryAccess> trace, std::span<const PrefetchCandidate> prefetches,
                           const CacheConfig& config) {
  config.validate();
  for (std::size_t i = 1; i < prefetches.size(); ++i)
    if (prefetches[i].instr_id < prefetches[i - 1].instr_id)
      throw SimulationError("prefetch file is not sorted by instr_id (entry " + std::to_string(i + 1) + ")");

  EvalReport r;
  r.demand_accesses = trace.size();
  r.demand_misses_baseline = count_demand_misses(trace, config);

  Cache cache(config);
  std::size_t next = 0;
  for (const auto& access : trace) {
    while (next < prefetches.size() && prefetches[next].instr_id < access.instr_id) {
      const auto outcome = cache.access(prefetches[next].address, false);
      ++r.prefetch_candidates;
      if (outcome.filled)
        ++r.prefetches_issued;
      else
        ++r.prefetches_redundant;
      ++next;
    }
    const auto outcome = cache.access(access.address, true);
    if (!outcome.hit) ++r.demand_misses_with_prefetch;
    if (outcome.prefetch_hit) ++r.prefetches_useful;
  }

  if (r.prefetches_issued > 0)
    r.accuracy = static_cast<double>(r.prefetches_useful) / static_cast<double>(r.prefetches_issued);
  if (r.demand_misses_baseline > 0)
    r.coverage = (static_cast<double>(r.demand_misses_baseline) - static_cast<double>(r.demand_misses_with_prefetch)) /
                 static_cast<double>(r.demand_misses_baseline);
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"demand_accesses", r.demand_accesses},
          {"demand_misses_baseline", r.demand_misses_baseline},
          {"demand_misses_with_prefetch", r.demand_misses_with_prefetch},
          {"prefetch_candidates", r.prefetch_candidates},
          {"prefetches_issued", r.prefetches_issued},
          {"prefetches_redundant", r.prefetches_redundant},
          {"prefetches_useful", r.prefetches_useful},
          {"accuracy", r.accuracy},
          {"coverage", r.coverage}};
}

inline constexpr const char* kEvalCsvHeader =
    "label,demand_accesses,demand_misses_baseline,demand_misses_with_prefetch,prefetch_candidates,"
    "prefetches_issued,prefetches_redundant,prefetches_useful,accuracy,coverage";

inline void write_eval_csv_row(std::ostream& out, const std::string& label, const EvalReport& r) {
  out.precision(17);
  out << label << ',' << r.demand_accesses << ',' << r.demand_misses_baseline << ',' << r.demand_misses_with_prefetch
      << ',' << r.prefetch_candidates << ',' << r.prefetches_issued << ',' << r.prefetches_redundant << ','
      << r.prefetches_useful << ',' << r.accuracy << ',' << r.coverage << '\n';
}

// Appends one row, writing the header first if the file is new or empty.
inline void append_eval_csv(const std::string& path, const std::string& label, const EvalReport& r) {
  bool needs_header = true;
  {
    std::ifstream probe(path, std::ios::ate);
    if (probe && probe.tellg() > 0) needs_header = false;
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError(path, "cannot open CSV for appending");
  if (needs_header) out << kEvalCsvHeader << '\n';
  write_eval_csv_row(out, label, r);
  if (!out.flush()) throw IoError(path, "write failed");
}

}  // namespace kanboost
