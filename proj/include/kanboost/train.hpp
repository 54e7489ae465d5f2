#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "kanboost/error.hpp"
#include "kanboost/kan.hpp"
#include "kanboost/trace.hpp"

namespace kanboost {

struct TrainConfig {
  std::size_t steps = 1000;
  double lambda_weight = 0.01;
  double lambda_entropy = 8.5;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;

  RegularizationWeights regularization() const { return {lambda_weight, lambda_entropy}; }

  void validate() const {
    if (steps < 1) throw ConfigError("steps must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (lambda_weight < 0.0 || lambda_entropy < 0.0) throw ConfigError("regularization weights must be non-negative");
  }
};

struct StepLoss {
  double total = 0.0;
  double regularization = 0.0;

  friend bool operator==(const StepLoss&, const StepLoss&) = default;
};

struct TrainReport {
  std::vector<StepLoss> losses;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;  // cross entropy on the test split; 0 when it is empty
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  double wall_seconds = 0.0;
};

// Fraction of samples whose argmax class equals the label; 0 for an empty set.
inline double accuracy(const KanModel& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples)
    if (argmax(model_forward(model, s.features)) == s.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

inline double mean_cross_entropy(const KanModel& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    const auto logits = model_forward(model, s.features);
    total += log_sum_exp(logits) - logits[s.label];
  }
  return total / static_cast<double>(samples.size());
}

class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  AdamOptimizer(const KanModel& model, double learning_rate) : lr_(learning_rate) {
    for (const auto& l : model.layers()) {
      m_.push_back(LayerParams::zeros_like(l.params));
      v_.push_back(LayerParams::zeros_like(l.params));
    }
  }

  void step(KanModel& model, const std::vector<LayerParams>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t l = 0; l < grads.size(); ++l) {
      auto& p = model.layers()[l].params;
      update(p.coeffs, grads[l].coeffs, m_[l].coeffs, v_[l].coeffs, bc1, bc2);
      update(p.w_spline, grads[l].w_spline, m_[l].w_spline, v_[l].w_spline, bc1, bc2);
      update(p.w_base, grads[l].w_base, m_[l].w_base, v_[l].w_base, bc1, bc2);
    }
  }

 private:
  void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
              double bc1, double bc2) const {
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g[j];
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kEpsilon);
    }
  }

  double lr_;
  std::size_t t_ = 0;
  std::vector<LayerParams> m_;
  std::vector<LayerParams> v_;
};

// Runs `config.steps` Adam updates. Batches walk the training split in order and
// wrap around at the end.
inline TrainReport train(KanModel& model, const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.train.empty()) throw DatasetError("training split is empty");
  for (const auto* split : {&dataset.train, &dataset.test})
    for (const auto& s : *split) {
      if (s.features.size() != model.input_dim())
        throw DimensionError("sample has " + std::to_string(s.features.size()) + " features, model expects " +
                             std::to_string(model.input_dim()));
      if (s.label >= model.output_dim())
        throw DimensionError("label " + std::to_string(s.label) + " exceeds model output width " +
                             std::to_string(model.output_dim()));
    }

  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  report.train_samples = dataset.train.size();
  report.test_samples = dataset.test.size();
  report.losses.reserve(config.steps);

  AdamOptimizer adam(model, config.learning_rate);
  const auto weights = config.regularization();
  const std::size_t n = dataset.train.size();
  std::vector<std::vector<double>> features(config.batch_size);
  std::vector<std::size_t> labels(config.batch_size);
  std::size_t cursor = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto& s = dataset.train[cursor];
      features[b] = s.features;
      labels[b] = s.label;
      cursor = (cursor + 1) % n;
    }
    auto result = compute_gradients(model, features, labels, weights);
    const double total = result.loss.total();
    if (!std::isfinite(total)) throw TrainingError(step, "non-finite loss " + std::to_string(total));
    report.losses.push_back({total, result.loss.regularization});
    adam.step(model, result.grads);
  }
  if (!model.all_finite()) throw TrainingError(config.steps, "non-finite parameters after training");

  report.train_accuracy = accuracy(model, dataset.train);
  report.test_accuracy = accuracy(model, dataset.test);
  report.test_loss = mean_cross_entropy(model, dataset.test);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// "step,loss,reg_loss" rows, one per optimizer step.
inline void write_loss_curve_csv(std::ostream& out, const TrainReport& report) {
  out << "step,loss,reg_loss\n";
  out.precision(17);
  for (std::size_t s = 0; s < report.losses.size(); ++s)
    out << s << ',' << report.losses[s].total << ',' << report.losses[s].regularization << '\n';
}

}  // namespace kanboost
