#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fehforge/network.hpp"
#include "fehforge/rng.hpp"

namespace fehforge::gradcheck {

/// Relative error with a small absolute floor so that gradients near zero are compared
/// on an absolute scale.
inline double rel_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central-difference error against `analytic`. A probe that straddles a ReLU or max-pool
/// kink disagrees at step h but agrees once h is below the distance to the kink, so a
/// poor match is retried at h/10 and h/100 and the best one is kept.
template <class Difference>
double refined_error(double analytic, double step, Difference&& difference) {
  double best = rel_error(analytic, difference(step));
  for (double h = step / 10; best > 1e-6 && h >= step / 100; h /= 10)
    best = std::min(best, rel_error(analytic, difference(h)));
  return best;
}

struct GradCheckResult {
  double max_param_error = 0.0;
  double max_input_error = 0.0;
  std::size_t checked = 0;
};

/// Compares backprop against central differences for the scalar loss Σ c_i y_i with
/// fixed random coefficients. Every parameter entry is checked when `stride` is 1.
inline GradCheckResult check_network_gradients(nn::Network& net, const nn::Tensor& x,
                                               const nn::Mask& mask, const nn::RunContext& ctx,
                                               double step = 1e-5, std::size_t stride = 1,
                                               std::uint64_t seed = 7) {
  const nn::Tensor y0 = net.forward(x, mask, ctx);
  Rng rng(seed);
  nn::Tensor coef(y0.shape);
  for (double& c : coef.data) c = rng.uniform(-1.0, 1.0);
  auto loss = [&](const nn::Tensor& input) {
    const nn::Tensor y = net.forward(input, mask, ctx);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += coef.data[i] * y.data[i];
    return s;
  };

  net.zero_grad();
  net.forward(x, mask, ctx);
  const nn::Tensor dx = net.backward(coef);
  std::vector<std::vector<double>> analytic;
  for (nn::Parameter* p : net.parameters()) analytic.push_back(p->grad.data);
  // Running statistics move on every training forward; freeze them for the probes.
  const auto saved = net.values();

  GradCheckResult result;
  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k]->value.size(); i += stride) {
      double& v = params[k]->value.data[i];
      const double orig = v;
      const double err = refined_error(analytic[k][i], step, [&](double h) {
        v = orig + h;
        const double up = loss(x);
        v = orig - h;
        const double down = loss(x);
        v = orig;
        return (up - down) / (2 * h);
      });
      result.max_param_error = std::max(result.max_param_error, err);
      ++result.checked;
    }
  }
  nn::Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); i += stride) {
    if (!mask.empty() && !mask[i / x.shape.back()]) continue;
    const double err = refined_error(dx.data[i], step, [&](double h) {
      probe.data[i] = x.data[i] + h;
      const double up = loss(probe);
      probe.data[i] = x.data[i] - h;
      const double down = loss(probe);
      probe.data[i] = x.data[i];
      return (up - down) / (2 * h);
    });
    result.max_input_error = std::max(result.max_input_error, err);
  }
  net.set_values(saved);
  return result;
}

}  // namespace fehforge::gradcheck
