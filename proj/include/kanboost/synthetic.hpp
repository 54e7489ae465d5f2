#pragma once

// Deterministic synthetic traces for experiments and tests.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "kanboost/trace.hpp"

namespace kanboost::synthetic {

inline constexpr std::uint64_t kRegionStride = std::uint64_t{1} << 32;

// Block-granular walk with a constant block stride, crossing pages as it goes.
// Negative strides start at the top of the region and walk down.
inline std::vector<MemoryAccess> constant_stride(std::size_t count, int stride_blocks, const AddressLayout& layout = {},
                                                 std::uint64_t base = kRegionStride) {
  std::vector<MemoryAccess> trace;
  trace.reserve(count);
  const auto step = static_cast<std::int64_t>(stride_blocks) * static_cast<std::int64_t>(layout.block_size());
  auto address = static_cast<std::int64_t>(base);
  if (stride_blocks < 0) address += static_cast<std::int64_t>(count) * -step;
  for (std::size_t i = 0; i < count; ++i) {
    trace.push_back({i, 10 * i, static_cast<std::uint64_t>(address), 0x400000, false});
    address += step;
  }
  return trace;
}

// Round-robin interleaving of one constant-stride stream per entry of `strides`,
// each stream in its own address region.
inline std::vector<MemoryAccess> interleaved_strides(std::size_t count, std::span<const int> strides,
                                                     const AddressLayout& layout = {}) {
  std::vector<std::vector<MemoryAccess>> streams;
  const std::size_t per_stream = count / strides.size() + 1;
  for (std::size_t s = 0; s < strides.size(); ++s)
    streams.push_back(constant_stride(per_stream, strides[s], layout, (s + 1) * kRegionStride));
  std::vector<MemoryAccess> trace;
  trace.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto a = streams[i % strides.size()][i / strides.size()];
    a.instr_id = i;
    a.cycle = 10 * i;
    a.pc = 0x400000 + 4 * (i % strides.size());
    trace.push_back(a);
  }
  return trace;
}

// Uniformly random block addresses over `pages` pages.
inline std::vector<MemoryAccess> random_blocks(std::size_t count, std::size_t pages, std::uint64_t seed,
                                               const AddressLayout& layout = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> page(0, pages - 1);
  std::uniform_int_distribution<std::uint64_t> block(0, layout.blocks_per_page() - 1);
  std::vector<MemoryAccess> trace;
  trace.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const DecomposedAddress parts{kRegionStride / layout.blocks_per_page() / layout.block_size() + page(rng),
                                  block(rng), 0};
    trace.push_back({i, 10 * i, recompose_address(parts, layout), 0x400000, false});
  }
  return trace;
}

}  // namespace kanboost::synthetic
