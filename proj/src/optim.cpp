#include "fehforge/optim.hpp"

#include <cmath>

#include "fehforge/error.hpp"

namespace fehforge::nn {

double weighted_mse(std::span<const double> predicted, std::span<const double> target,
                    std::span<const double> weights, std::vector<double>* grad) {
  const std::size_t n = predicted.size();
  if (target.size() != n || weights.size() != n)
    fail(ErrorCode::ShapeMismatch, "weighted_mse: prediction, target and weight lengths differ");
  double wsum = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = predicted[i] - target[i];
    wsum += weights[i];
    acc += weights[i] * e * e;
  }
  if (!(wsum > 0.0)) fail(ErrorCode::NonPositiveWeightSum, "weighted_mse: weight sum is not positive");
  if (grad) {
    grad->resize(n);
    for (std::size_t i = 0; i < n; ++i) (*grad)[i] = 2.0 * weights[i] * (predicted[i] - target[i]) / wsum;
  }
  return acc / wsum;
}

double regularization_penalty(const std::vector<Parameter*>& params, bool add_gradients) {
  double total = 0.0;
  for (Parameter* p : params) {
    if (p->l1 == 0.0 && p->l2 == 0.0) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double x = p->value.data[i];
      total += p->l1 * std::abs(x) + p->l2 * x * x;
      if (add_gradients) {
        const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        p->grad.data[i] += p->l1 * sign + 2.0 * p->l2 * x;
      }
    }
  }
  return total;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0) || !std::isfinite(config_.learning_rate))
    fail(ErrorCode::InvalidConfig, "Adam: learning rate must be positive and finite");
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      p.value.data[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
}

}  // namespace fehforge::nn
