#pragma once

// Uniform B-spline bases on an extended knot vector.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "kanboost/error.hpp"

namespace kanboost {

// A uniform grid of `intervals` cells over [lo, hi], extended by `degree` knots on
// each side so that every point of the domain is covered by degree + 1 bases.
// `degree` is the `k` of the usual KAN parameterization: G + k bases per edge.
class SplineGrid {
 public:
  SplineGrid(std::size_t intervals = 4, std::size_t degree = 6, double lo = -1.0, double hi = 1.0)
      : intervals_(intervals), degree_(degree), lo_(lo), hi_(hi) {
    if (intervals_ == 0) throw ConfigError("spline grid needs at least one interval");
    if (!(hi_ > lo_)) throw ConfigError("spline domain must satisfy lo < hi");
    const double h = (hi_ - lo_) / static_cast<double>(intervals_);
    knots_.resize(intervals_ + 2 * degree_ + 1);
    for (std::size_t j = 0; j < knots_.size(); ++j)
      knots_[j] = lo_ + (static_cast<double>(j) - static_cast<double>(degree_)) * h;
    // Land exactly on the domain ends despite rounding.
    knots_[degree_] = lo_;
    knots_[degree_ + intervals_] = hi_;
  }

  std::size_t intervals() const { return intervals_; }
  std::size_t degree() const { return degree_; }
  std::size_t basis_count() const { return intervals_ + degree_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& knots() const { return knots_; }

  double clamp(double x) const { return std::clamp(x, lo_, hi_); }

  friend bool operator==(const SplineGrid& a, const SplineGrid& b) {
    return a.intervals_ == b.intervals_ && a.degree_ == b.degree_ && a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

 private:
  std::size_t intervals_;
  std::size_t degree_;
  double lo_;
  double hi_;
  std::vector<double> knots_;
};

// Evaluates every basis at `x` (clamped to the domain) with the iterative Cox-de Boor
// recursion. When `derivative` is non-empty it receives d/dx of each basis; the
// derivative is taken with respect to the clamped value.
// `values` and `derivative` must hold basis_count() entries; `scratch` at least knots().size().
inline void bspline_basis_into(double x, const SplineGrid& grid, std::span<double> values,
                               std::span<double> derivative, std::span<double> scratch) {
  const auto& t = grid.knots();
  const std::size_t k = grid.degree();
  const std::size_t n0 = t.size() - 1;
  x = grid.clamp(x);

  auto* n = scratch.data();
  for (std::size_t j = 0; j < n0; ++j) n[j] = (t[j] <= x && x < t[j + 1]) ? 1.0 : 0.0;

  for (std::size_t p = 1; p <= k; ++p) {
    if (p == k && !derivative.empty()) {
      // Derivative of the degree-k bases from the degree-(k-1) ones.
      const double kd = static_cast<double>(k);
      for (std::size_t j = 0; j + k < n0; ++j)
        derivative[j] = kd / (t[j + k] - t[j]) * n[j] - kd / (t[j + k + 1] - t[j + 1]) * n[j + 1];
    }
    const std::size_t count = n0 - p;
    for (std::size_t j = 0; j < count; ++j) {
      const double left = (x - t[j]) / (t[j + p] - t[j]) * n[j];
      const double right = (t[j + p + 1] - x) / (t[j + p + 1] - t[j + 1]) * n[j + 1];
      n[j] = left + right;
    }
  }
  if (k == 0 && !derivative.empty()) std::fill(derivative.begin(), derivative.end(), 0.0);
  std::copy_n(n, grid.basis_count(), values.begin());
}

inline std::vector<double> bspline_basis(double x, const SplineGrid& grid) {
  std::vector<double> values(grid.basis_count());
  std::vector<double> scratch(grid.knots().size());
  bspline_basis_into(x, grid, values, {}, scratch);
  return values;
}

inline std::vector<double> bspline_basis_derivative(double x, const SplineGrid& grid) {
  std::vector<double> values(grid.basis_count());
  std::vector<double> derivative(grid.basis_count());
  std::vector<double> scratch(grid.knots().size());
  bspline_basis_into(x, grid, values, derivative, scratch);
  return derivative;
}

}  // namespace kanboost
