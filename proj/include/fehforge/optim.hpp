#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fehforge/layers.hpp"

namespace fehforge::nn {

/// Σ w (ŷ - y)² / Σ w. When `grad` is given it receives d loss / d ŷ.
/// Throws NonPositiveWeightSum, ShapeMismatch.
double weighted_mse(std::span<const double> predicted, std::span<const double> target,
                    std::span<const double> weights, std::vector<double>* grad = nullptr);

/// Σ l1|p| + l2 p² over all parameters. With `add_gradients` the penalty gradient is
/// accumulated into each parameter's grad; the subgradient of |p| at 0 is taken as 0.
double regularization_penalty(const std::vector<Parameter*>& params, bool add_gradients);

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {});

  /// Applies one update from the parameters' current gradients.
  void step();

  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace fehforge::nn
