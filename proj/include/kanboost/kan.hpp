#pragma once

// Kolmogorov-Arnold network with B-spline edge activations.
//
// Every edge (o, i) of a layer carries its own learnable one-dimensional function
//
//   phi_oi(x) = w_base[o][i] * silu(x) + w_spline[o][i] * sum_m c[o][i][m] * B_m(x)
//
// and each output node sums its incoming edges. Stacking layers gives the nested
// sum-of-univariate-functions form of the Kolmogorov-Arnold representation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kanboost/error.hpp"
#include "kanboost/spline.hpp"

namespace kanboost {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// Parameter tensors of one layer, also used for gradients and optimizer moments.
struct LayerParams {
  std::vector<double> coeffs;    // [out][in][basis]
  std::vector<double> w_spline;  // [out][in]
  std::vector<double> w_base;    // [out][in]

  static LayerParams zeros_like(const LayerParams& p) {
    return {std::vector<double>(p.coeffs.size()), std::vector<double>(p.w_spline.size()),
            std::vector<double>(p.w_base.size())};
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f(coeffs);
    f(w_spline);
    f(w_base);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f(coeffs);
    f(w_spline);
    f(w_base);
  }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct KanLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  SplineGrid grid;
  LayerParams params;

  KanLayer(std::size_t in, std::size_t out, SplineGrid g)
      : in_dim(in), out_dim(out), grid(std::move(g)) {
    if (in_dim == 0 || out_dim == 0) throw DimensionError("layer widths must be positive");
    params.coeffs.assign(out_dim * in_dim * grid.basis_count(), 0.0);
    params.w_spline.assign(out_dim * in_dim, 0.0);
    params.w_base.assign(out_dim * in_dim, 0.0);
  }

  std::size_t basis_count() const { return grid.basis_count(); }
  std::size_t edge(std::size_t o, std::size_t i) const { return o * in_dim + i; }
  double& coeff(std::size_t o, std::size_t i, std::size_t m) { return params.coeffs[edge(o, i) * basis_count() + m]; }
  double coeff(std::size_t o, std::size_t i, std::size_t m) const {
    return params.coeffs[edge(o, i) * basis_count() + m];
  }

  bool all_finite() const {
    bool ok = true;
    params.for_each_tensor([&](const std::vector<double>& t) {
      ok = ok && std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); });
    });
    return ok;
  }
};

// Everything the backward pass and the regularizer need from one layer's forward pass.
struct LayerCache {
  std::vector<double> input;       // [in]
  std::vector<double> basis;       // [in][basis]
  std::vector<double> dbasis;      // [in][basis], zero where the input was clamped
  std::vector<double> silu;        // [in]
  std::vector<double> dsilu;       // [in]
  std::vector<double> spline_raw;  // [out][in], sum_m c * B before the w_spline scale
  std::vector<double> output;      // [out]
};

inline LayerCache layer_forward(const KanLayer& layer, std::span<const double> x, bool keep_derivatives = true) {
  if (x.size() != layer.in_dim)
    throw DimensionError("layer expects " + std::to_string(layer.in_dim) + " inputs, got " + std::to_string(x.size()));
  const std::size_t in = layer.in_dim;
  const std::size_t out = layer.out_dim;
  const std::size_t nb = layer.basis_count();

  LayerCache c;
  c.input.assign(x.begin(), x.end());
  c.basis.resize(in * nb);
  c.silu.resize(in);
  if (keep_derivatives) {
    c.dbasis.resize(in * nb);
    c.dsilu.resize(in);
  }
  std::vector<double> scratch(layer.grid.knots().size());
  for (std::size_t i = 0; i < in; ++i) {
    std::span<double> b(c.basis.data() + i * nb, nb);
    std::span<double> db;
    if (keep_derivatives) db = std::span<double>(c.dbasis.data() + i * nb, nb);
    bspline_basis_into(x[i], layer.grid, b, db, scratch);
    if (keep_derivatives && (x[i] < layer.grid.lo() || x[i] > layer.grid.hi())) std::fill(db.begin(), db.end(), 0.0);
    c.silu[i] = silu(x[i]);
    if (keep_derivatives) c.dsilu[i] = silu_derivative(x[i]);
  }

  c.spline_raw.resize(out * in);
  c.output.assign(out, 0.0);
  const double* coeffs = layer.params.coeffs.data();
  for (std::size_t o = 0; o < out; ++o) {
    double y = 0.0;
    for (std::size_t i = 0; i < in; ++i) {
      const std::size_t e = o * in + i;
      const double* ce = coeffs + e * nb;
      const double* b = c.basis.data() + i * nb;
      double s = 0.0;
      for (std::size_t m = 0; m < nb; ++m) s += ce[m] * b[m];
      c.spline_raw[e] = s;
      y += layer.params.w_base[e] * c.silu[i] + layer.params.w_spline[e] * s;
    }
    c.output[o] = y;
  }
  return c;
}

class KanModel {
 public:
  // Zero-initialized network.
  KanModel(std::vector<std::size_t> widths, SplineGrid grid, std::uint64_t seed = 0)
      : widths_(std::move(widths)), grid_(std::move(grid)), seed_(seed) {
    if (widths_.size() < 2) throw DimensionError("a model needs at least input and output widths");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) layers_.emplace_back(widths_[l], widths_[l + 1], grid_);
  }

  // Spline coefficients ~ N(0, 0.1^2 / (G + k)); unit base and spline mixing weights.
  static KanModel initialized(std::vector<std::size_t> widths, SplineGrid grid, std::uint64_t seed) {
    KanModel model(std::move(widths), std::move(grid), seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.1 / std::sqrt(static_cast<double>(model.grid_.basis_count())));
    for (auto& layer : model.layers_) {
      for (auto& c : layer.params.coeffs) c = noise(rng);
      std::fill(layer.params.w_spline.begin(), layer.params.w_spline.end(), 1.0);
      std::fill(layer.params.w_base.begin(), layer.params.w_base.end(), 1.0);
    }
    return model;
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  const SplineGrid& grid() const { return grid_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }

  std::vector<KanLayer>& layers() { return layers_; }
  const std::vector<KanLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.params.coeffs.size() + l.params.w_spline.size() + l.params.w_base.size();
    return n;
  }

  bool all_finite() const {
    return std::all_of(layers_.begin(), layers_.end(), [](const KanLayer& l) { return l.all_finite(); });
  }

  friend bool operator==(const KanModel& a, const KanModel& b) {
    if (a.widths_ != b.widths_ || !(a.grid_ == b.grid_) || a.seed_ != b.seed_) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l)
      if (!(a.layers_[l].params == b.layers_[l].params)) return false;
    return true;
  }

 private:
  std::vector<std::size_t> widths_;
  SplineGrid grid_;
  std::uint64_t seed_;
  std::vector<KanLayer> layers_;
};

inline std::vector<LayerCache> model_forward_cached(const KanModel& model, std::span<const double> features) {
  if (features.size() != model.input_dim())
    throw DimensionError("model expects " + std::to_string(model.input_dim()) + " features, got " +
                         std::to_string(features.size()));
  std::vector<LayerCache> caches;
  caches.reserve(model.layers().size());
  std::span<const double> x = features;
  for (const auto& layer : model.layers()) {
    caches.push_back(layer_forward(layer, x));
    x = caches.back().output;
  }
  return caches;
}

// Inference only; safe to call concurrently on a shared model.
inline std::vector<double> model_forward(const KanModel& model, std::span<const double> features) {
  if (features.size() != model.input_dim())
    throw DimensionError("model expects " + std::to_string(model.input_dim()) + " features, got " +
                         std::to_string(features.size()));
  std::vector<double> x(features.begin(), features.end());
  for (const auto& layer : model.layers()) x = layer_forward(layer, x, false).output;
  return x;
}

// Index of the largest logit; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

// ---------------------------------------------------------------------------
// Losses

inline double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) p[c] = std::exp(logits[c] - lse);
  return p;
}

// Mean negative log-likelihood of `labels` under softmax(logits).
inline double cross_entropy_loss(std::span<const std::vector<double>> logits, std::span<const std::size_t> labels) {
  if (logits.empty() || logits.size() != labels.size())
    throw DimensionError("cross entropy needs a non-empty batch with one label per row");
  double total = 0.0;
  for (std::size_t n = 0; n < logits.size(); ++n) {
    if (labels[n] >= logits[n].size())
      throw DimensionError("label " + std::to_string(labels[n]) + " outside " + std::to_string(logits[n].size()) +
                           " classes");
    total += log_sum_exp(logits[n]) - logits[n][labels[n]];
  }
  return total / static_cast<double>(logits.size());
}

struct RegularizationWeights {
  double lambda_weight = 0.01;
  double lambda_entropy = 8.5;
};

// Per-layer edge magnitudes A_e = mean over the batch of |w_spline * spline_raw|.
inline std::vector<std::vector<double>> edge_activation_magnitudes(const KanModel& model,
                                                                   std::span<const std::vector<LayerCache>> batch) {
  std::vector<std::vector<double>> mags;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& w_spline = model.layers()[l].params.w_spline;
    std::vector<double> a(w_spline.size(), 0.0);
    for (const auto& caches : batch) {
      const auto& raw = caches[l].spline_raw;
      for (std::size_t e = 0; e < a.size(); ++e) a[e] += std::abs(w_spline[e] * raw[e]);
    }
    for (auto& v : a) v /= static_cast<double>(batch.size());
    mags.push_back(std::move(a));
  }
  return mags;
}

// Shannon entropy of the edges' share of a layer's total magnitude; 0 for an inactive layer.
inline double activation_entropy(std::span<const double> magnitudes) {
  double total = 0.0;
  for (double a : magnitudes) total += a;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double a : magnitudes)
    if (a > 0.0) {
      const double p = a / total;
      h -= p * std::log(p);
    }
  return h;
}

// lambda * (sum of edge magnitudes + lambda_entropy * sum of per-layer entropies).
inline double regularization_loss(const KanModel& model, std::span<const std::vector<LayerCache>> batch,
                                  const RegularizationWeights& weights) {
  if (weights.lambda_weight == 0.0 || batch.empty()) return 0.0;
  double l1 = 0.0;
  double entropy = 0.0;
  for (const auto& a : edge_activation_magnitudes(model, batch)) {
    for (double v : a) l1 += v;
    entropy += activation_entropy(a);
  }
  return weights.lambda_weight * (l1 + weights.lambda_entropy * entropy);
}

// d(regularization)/dA_e for every edge; zero for inactive edges.
inline std::vector<std::vector<double>> regularization_magnitude_gradient(
    const std::vector<std::vector<double>>& magnitudes, const RegularizationWeights& weights) {
  std::vector<std::vector<double>> grads;
  for (const auto& a : magnitudes) {
    std::vector<double> g(a.size(), 0.0);
    double total = 0.0;
    for (double v : a) total += v;
    if (total > 0.0) {
      const double h = activation_entropy(a);
      for (std::size_t e = 0; e < a.size(); ++e) {
        if (a[e] <= 0.0) continue;
        const double dh = -(std::log(a[e] / total) + h) / total;
        g[e] = weights.lambda_weight * (1.0 + weights.lambda_entropy * dh);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Backward pass

struct LossBreakdown {
  double cross_entropy = 0.0;
  double regularization = 0.0;
  double total() const { return cross_entropy + regularization; }
};

struct GradientResult {
  LossBreakdown loss;
  std::vector<LayerParams> grads;  // one per layer, shaped like the parameters
};

// Loss and exact gradient of cross entropy plus regularization over one batch.
inline GradientResult compute_gradients(const KanModel& model, std::span<const std::vector<double>> features,
                                        std::span<const std::size_t> labels, const RegularizationWeights& weights) {
  if (features.empty() || features.size() != labels.size())
    throw DimensionError("gradient batch needs matching non-empty features and labels");
  const std::size_t n_samples = features.size();
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  const auto& layers = model.layers();

  std::vector<std::vector<LayerCache>> batch;
  batch.reserve(n_samples);
  for (const auto& f : features) batch.push_back(model_forward_cached(model, f));

  GradientResult result;
  std::vector<std::vector<double>> reg_grad;
  const bool regularize = weights.lambda_weight != 0.0;
  if (regularize) {
    const auto mags = edge_activation_magnitudes(model, batch);
    double l1 = 0.0;
    double entropy = 0.0;
    for (const auto& a : mags) {
      for (double v : a) l1 += v;
      entropy += activation_entropy(a);
    }
    result.loss.regularization = weights.lambda_weight * (l1 + weights.lambda_entropy * entropy);
    reg_grad = regularization_magnitude_gradient(mags, weights);
  }

  for (const auto& l : layers) result.grads.push_back(LayerParams::zeros_like(l.params));

  double ce = 0.0;
  std::vector<double> g;
  std::vector<double> dx;
  for (std::size_t n = 0; n < n_samples; ++n) {
    const auto& caches = batch[n];
    const auto& logits = caches.back().output;
    if (labels[n] >= logits.size())
      throw DimensionError("label " + std::to_string(labels[n]) + " outside " + std::to_string(logits.size()) +
                           " classes");
    const double lse = log_sum_exp(logits);
    ce += lse - logits[labels[n]];
    g.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) g[c] = std::exp(logits[c] - lse) * inv_n;
    g[labels[n]] -= inv_n;

    for (std::size_t li = layers.size(); li-- > 0;) {
      const auto& layer = layers[li];
      const auto& cache = caches[li];
      auto& grad = result.grads[li];
      const std::size_t in = layer.in_dim;
      const std::size_t nb = layer.basis_count();
      const bool need_dx = li > 0;
      dx.assign(in, 0.0);
      for (std::size_t o = 0; o < layer.out_dim; ++o) {
        const double go = g[o];
        for (std::size_t i = 0; i < in; ++i) {
          const std::size_t e = o * in + i;
          const double raw = cache.spline_raw[e];
          const double ws = layer.params.w_spline[e];
          double ge = go;
          if (regularize) {
            const double act = ws * raw;
            const double sign = act > 0.0 ? 1.0 : (act < 0.0 ? -1.0 : 0.0);
            ge += reg_grad[li][e] * sign * inv_n;
          }
          grad.w_base[e] += go * cache.silu[i];
          grad.w_spline[e] += ge * raw;
          const double scale = ge * ws;
          const double* b = cache.basis.data() + i * nb;
          double* gc = grad.coeffs.data() + e * nb;
          for (std::size_t m = 0; m < nb; ++m) gc[m] += scale * b[m];
          if (need_dx) {
            const double* db = cache.dbasis.data() + i * nb;
            const double* ce_ptr = layer.params.coeffs.data() + e * nb;
            double ds = 0.0;
            for (std::size_t m = 0; m < nb; ++m) ds += ce_ptr[m] * db[m];
            dx[i] += go * layer.params.w_base[e] * cache.dsilu[i] + scale * ds;
          }
        }
      }
      if (need_dx) g.swap(dx);
    }
  }
  result.loss.cross_entropy = ce * inv_n;
  return result;
}

}  // namespace kanboost
