#pragma once

#include <optional>
#include <span>
#include <vector>

namespace fehforge::preprocess {

/// Natural cubic smoothing spline in value/second-derivative form.
///
/// Minimises  sum_i w_i (y_i - f(x_i))^2 + lambda * integral f''(x)^2 dx  over natural cubic
/// splines with knots at the (strictly increasing) abscissae, using the Reinsch algorithm:
/// the interior second derivatives solve the pentadiagonal system (R + lambda Q' W^-1 Q) gamma
/// = Q' y, and the fitted values are g = y - lambda W^-1 Q gamma. Outside the knot range the
/// spline continues linearly.
struct SplineFit {
  std::vector<double> knots;
  std::vector<double> values;             // g_i = f(knots[i])
  std::vector<double> second_derivatives; // f''(knots[i]); zero at both ends
  double lambda = 0.0;
  double residual_rms = 0.0;
  /// Generalised cross-validation score at `lambda`, when it was computed.
  std::optional<double> gcv_score;

  double operator()(double x) const;
  std::vector<double> operator()(std::span<const double> xs) const;
  /// integral of f''(x)^2 over the knot range.
  double roughness() const;
};

struct SplineProblem {
  std::span<const double> x;  // strictly increasing
  std::span<const double> y;
  std::span<const double> w;  // empty means unit weights
};

/// Fits for a fixed lambda >= 0. Throws InsufficientPoints below 4 knots and SingularFit
/// when the banded factorisation breaks down. `residual_rms` is computed over the fitted
/// points themselves.
SplineFit fit_spline(const SplineProblem& problem, double lambda);

/// GCV score V(lambda) = n^-1 sum w (y - g)^2 / (1 - tr(A)/n)^2 together with tr(A).
struct GcvEvaluation {
  double lambda;
  double score;
  double hat_trace;
};
GcvEvaluation evaluate_gcv(const SplineProblem& problem, double lambda);

/// Minimises the GCV score over lambda: a log-spaced scan over [lambda_min, lambda_max]
/// followed by golden-section refinement in log space around the best grid point.
SplineFit fit_spline_gcv(const SplineProblem& problem, double lambda_min = 1e-12,
                         double lambda_max = 1e4);

}  // namespace fehforge::preprocess
