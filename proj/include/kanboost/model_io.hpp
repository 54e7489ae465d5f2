#pragma once

// Binary model container. All integers and reals are little-endian; reals are
// IEEE-754 binary64 stored bit-for-bit.
//
//   bytes  field
//   8      magic "KANBOOST"
//   u32    format version (kModelFormatVersion)
//   u32    number of widths W
//   W*u32  layer widths, input first
//   u32    grid intervals G
//   u32    spline degree k
//   f64    domain lower bound
//   f64    domain upper bound
//   u64    seed
//   per layer:
//     u64  length, then that many f64 spline coefficients  [out][in][G+k]
//     u64  length, then that many f64 spline weights       [out][in]
//     u64  length, then that many f64 base weights         [out][in]
//   8      end marker "KANBEND\0"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "kanboost/error.hpp"
#include "kanboost/kan.hpp"

namespace kanboost {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::array<char, 8> kModelMagic = {'K', 'A', 'N', 'B', 'O', 'O', 'S', 'T'};
inline constexpr std::array<char, 8> kModelEndMarker = {'K', 'A', 'N', 'B', 'E', 'N', 'D', '\0'};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t b = 0; b < sizeof(T); ++b) bytes[b] = static_cast<char>((value >> (8 * b)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw ModelFormatError(std::string("truncated model file while reading ") + what);
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) value |= static_cast<T>(bytes[b]) << (8 * b);
  return value;
}

inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in, const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(in, what)); }

inline void put_tensor(std::ostream& out, const std::vector<double>& t) {
  put_le<std::uint64_t>(out, t.size());
  for (double v : t) put_f64(out, v);
}

inline void get_tensor(std::istream& in, std::vector<double>& t, const char* what) {
  const auto n = get_le<std::uint64_t>(in, what);
  if (n != t.size())
    throw DimensionError(std::string(what) + ": stored length " + std::to_string(n) + " does not match declared widths (" +
                         std::to_string(t.size()) + ")");
  for (auto& v : t) v = get_f64(in, what);
}

}  // namespace detail

inline void save_model(std::ostream& out, const KanModel& model) {
  out.write(kModelMagic.data(), kModelMagic.size());
  detail::put_le(out, kModelFormatVersion);
  detail::put_le(out, static_cast<std::uint32_t>(model.widths().size()));
  for (auto w : model.widths()) detail::put_le(out, static_cast<std::uint32_t>(w));
  detail::put_le(out, static_cast<std::uint32_t>(model.grid().intervals()));
  detail::put_le(out, static_cast<std::uint32_t>(model.grid().degree()));
  detail::put_f64(out, model.grid().lo());
  detail::put_f64(out, model.grid().hi());
  detail::put_le(out, model.seed());
  for (const auto& layer : model.layers())
    layer.params.for_each_tensor([&](const std::vector<double>& t) { detail::put_tensor(out, t); });
  out.write(kModelEndMarker.data(), kModelEndMarker.size());
}

inline KanModel load_model(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size())) throw ModelFormatError("truncated model file (no header)");
  if (magic != kModelMagic) throw ModelFormatError("not a KANBoost model file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != kModelFormatVersion)
    throw ModelFormatError("unsupported model format version " + std::to_string(version) + " (expected " +
                           std::to_string(kModelFormatVersion) + ")");
  const auto n_widths = detail::get_le<std::uint32_t>(in, "width count");
  if (n_widths < 2 || n_widths > 64) throw DimensionError("implausible width count " + std::to_string(n_widths));
  std::vector<std::size_t> widths;
  for (std::uint32_t l = 0; l < n_widths; ++l) {
    const auto w = detail::get_le<std::uint32_t>(in, "widths");
    if (w == 0 || w > (1u << 20)) throw DimensionError("implausible layer width " + std::to_string(w));
    widths.push_back(w);
  }
  const auto intervals = detail::get_le<std::uint32_t>(in, "grid intervals");
  const auto degree = detail::get_le<std::uint32_t>(in, "spline degree");
  if (intervals == 0 || intervals > 4096 || degree > 64) throw ModelFormatError("implausible grid parameters");
  const double lo = detail::get_f64(in, "domain");
  const double hi = detail::get_f64(in, "domain");
  const auto seed = detail::get_le<std::uint64_t>(in, "seed");

  KanModel model(std::move(widths), SplineGrid(intervals, degree, lo, hi), seed);
  for (auto& layer : model.layers()) {
    detail::get_tensor(in, layer.params.coeffs, "spline coefficients");
    detail::get_tensor(in, layer.params.w_spline, "spline weights");
    detail::get_tensor(in, layer.params.w_base, "base weights");
  }
  std::array<char, 8> end{};
  if (!in.read(end.data(), end.size()) || end != kModelEndMarker)
    throw ModelFormatError("missing end marker (truncated file)");
  if (in.peek() != std::char_traits<char>::eof()) throw ModelFormatError("trailing data after end marker");
  return model;
}

inline void save_model(const std::string& path, const KanModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open model file for writing");
  save_model(out, model);
  if (!out.flush()) throw IoError(path, "write failed");
}

inline KanModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open model file");
  try {
    return load_model(in);
  } catch (const DimensionError& e) {
    throw DimensionError(path + ": " + e.what());
  } catch (const ModelFormatError& e) {
    throw ModelFormatError(path + ": " + e.what());
  }
}

}  // namespace kanboost
