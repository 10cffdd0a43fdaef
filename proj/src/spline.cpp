#include "fehforge/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fehforge/error.hpp"

namespace fehforge::preprocess {

namespace {

// Symmetric pentadiagonal matrix stored by diagonals: main, first and second upper.
struct Band {
  std::vector<double> d0, d1, d2;
  explicit Band(std::size_t m) : d0(m, 0.0), d1(m, 0.0), d2(m, 0.0) {}
  std::size_t size() const { return d0.size(); }
};

// Unit lower-triangular L with two subdiagonals and diagonal D, M = L D L'.
struct BandLdl {
  std::vector<double> diag;
  std::vector<double> l1;  // l1[j] = L(j, j-1)
  std::vector<double> l2;  // l2[j] = L(j, j-2)

  explicit BandLdl(const Band& m) : diag(m.size()), l1(m.size() + 2, 0.0), l2(m.size() + 2, 0.0) {
    const std::size_t n = m.size();
    double scale = 0.0;
    for (double v : m.d0) scale = std::max(scale, std::abs(v));
    const double tiny = scale * 1e-14 + std::numeric_limits<double>::min();
    for (std::size_t j = 0; j < n; ++j) {
      double dj = m.d0[j];
      if (j >= 1) dj -= l1[j] * l1[j] * diag[j - 1];
      if (j >= 2) dj -= l2[j] * l2[j] * diag[j - 2];
      if (!(dj > tiny)) fail(ErrorCode::SingularFit, "smoothing-spline system is not positive definite");
      diag[j] = dj;
      if (j + 2 < n) l2[j + 2] = m.d2[j] / dj;
      if (j + 1 < n) {
        double v = m.d1[j];
        if (j >= 1) v -= l2[j + 1] * l1[j] * diag[j - 1];
        l1[j + 1] = v / dj;
      }
    }
  }

  std::vector<double> solve(std::span<const double> b) const {
    const std::size_t n = diag.size();
    std::vector<double> z(b.begin(), b.end());
    for (std::size_t j = 0; j < n; ++j) {
      if (j >= 1) z[j] -= l1[j] * z[j - 1];
      if (j >= 2) z[j] -= l2[j] * z[j - 2];
    }
    for (std::size_t j = 0; j < n; ++j) z[j] /= diag[j];
    for (std::size_t k = n; k-- > 0;) {
      if (k + 1 < n) z[k] -= l1[k + 1] * z[k + 1];
      if (k + 2 < n) z[k] -= l2[k + 2] * z[k + 2];
    }
    return z;
  }

  // Entries of M^-1 within the band (Hutchinson & de Hoog recursion).
  Band inverse_band() const {
    const std::size_t n = diag.size();
    Band s(n);
    auto at = [&](std::size_t i, std::size_t j) -> double {
      if (i > j) std::swap(i, j);
      if (j >= n) return 0.0;
      switch (j - i) {
        case 0: return s.d0[i];
        case 1: return s.d1[i];
        case 2: return s.d2[i];
        default: return 0.0;
      }
    };
    for (std::size_t k = n; k-- > 0;) {
      const double a = k + 1 < n ? l1[k + 1] : 0.0;
      const double b = k + 2 < n ? l2[k + 2] : 0.0;
      if (k + 2 < n) s.d2[k] = -a * at(k + 1, k + 2) - b * at(k + 2, k + 2);
      if (k + 1 < n) s.d1[k] = -a * at(k + 1, k + 1) - b * at(k + 2, k + 1);
      s.d0[k] = 1.0 / diag[k] - a * at(k + 1, k) - b * at(k + 2, k);
    }
    return s;
  }
};

struct Assembled {
  std::vector<double> h;
  Band r;
  Band qwq;  // Q' W^-1 Q
  std::vector<double> qty;
};

std::vector<double> unit_or(std::span<const double> w, std::size_t n) {
  if (w.empty()) return std::vector<double>(n, 1.0);
  return {w.begin(), w.end()};
}

Assembled assemble(const SplineProblem& p) {
  const std::size_t n = p.x.size();
  if (p.y.size() != n || (!p.w.empty() && p.w.size() != n))
    fail(ErrorCode::ShapeMismatch, "spline inputs have different lengths");
  if (n < 4) fail(ErrorCode::InsufficientPoints, "a cubic smoothing spline needs at least 4 distinct abscissae");
  const std::vector<double> w = unit_or(p.w, n);
  for (double wi : w)
    if (!(wi > 0.0) || !std::isfinite(wi)) fail(ErrorCode::SingularFit, "spline weights must be positive");

  Assembled a{std::vector<double>(n - 1), Band(n - 2), Band(n - 2), std::vector<double>(n - 2)};
  for (std::size_t i = 0; i + 1 < n; ++i) {
    a.h[i] = p.x[i + 1] - p.x[i];
    if (!(a.h[i] > 0.0)) fail(ErrorCode::InsufficientPoints, "spline abscissae must be strictly increasing");
  }
  const std::size_t m = n - 2;
  // Column c of Q (interior knot c+1) has entries q0, q1, q2 in rows c, c+1, c+2.
  std::vector<double> q0(m), q1(m), q2(m);
  for (std::size_t c = 0; c < m; ++c) {
    q0[c] = 1.0 / a.h[c];
    q2[c] = 1.0 / a.h[c + 1];
    q1[c] = -q0[c] - q2[c];
    a.r.d0[c] = (a.h[c] + a.h[c + 1]) / 3.0;
    if (c + 1 < m) a.r.d1[c] = a.h[c + 1] / 6.0;
    a.qty[c] = q0[c] * p.y[c] + q1[c] * p.y[c + 1] + q2[c] * p.y[c + 2];
  }
  for (std::size_t c = 0; c < m; ++c) {
    a.qwq.d0[c] = q0[c] * q0[c] / w[c] + q1[c] * q1[c] / w[c + 1] + q2[c] * q2[c] / w[c + 2];
    if (c + 1 < m) a.qwq.d1[c] = q1[c] * q0[c + 1] / w[c + 1] + q2[c] * q1[c + 1] / w[c + 2];
    if (c + 2 < m) a.qwq.d2[c] = q2[c] * q0[c + 2] / w[c + 2];
  }
  return a;
}

Band system(const Assembled& a, double lambda) {
  Band m(a.r.size());
  for (std::size_t c = 0; c < m.size(); ++c) {
    m.d0[c] = a.r.d0[c] + lambda * a.qwq.d0[c];
    m.d1[c] = a.r.d1[c] + lambda * a.qwq.d1[c];
    m.d2[c] = a.r.d2[c] + lambda * a.qwq.d2[c];
  }
  return m;
}

struct Solution {
  SplineFit fit;
  BandLdl ldl;
  double weighted_rss;
};

Solution solve(const SplineProblem& p, const Assembled& a, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    fail(ErrorCode::InvalidConfig, "smoothing parameter must be finite and >= 0");
  const std::size_t n = p.x.size();
  const std::vector<double> w = unit_or(p.w, n);
  BandLdl ldl(system(a, lambda));
  const std::vector<double> gamma = ldl.solve(a.qty);

  SplineFit fit;
  fit.lambda = lambda;
  fit.knots.assign(p.x.begin(), p.x.end());
  fit.second_derivatives.assign(n, 0.0);
  std::copy(gamma.begin(), gamma.end(), fit.second_derivatives.begin() + 1);
  fit.values.assign(p.y.begin(), p.y.end());
  // g = y - lambda W^-1 Q gamma
  for (std::size_t c = 0; c < gamma.size(); ++c) {
    const double q0 = 1.0 / a.h[c], q2 = 1.0 / a.h[c + 1], q1 = -q0 - q2;
    fit.values[c] -= lambda * q0 * gamma[c] / w[c];
    fit.values[c + 1] -= lambda * q1 * gamma[c] / w[c + 1];
    fit.values[c + 2] -= lambda * q2 * gamma[c] / w[c + 2];
  }
  double rss = 0.0, wrss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = p.y[i] - fit.values[i];
    rss += e * e;
    wrss += w[i] * e * e;
  }
  fit.residual_rms = std::sqrt(rss / static_cast<double>(n));
  return {std::move(fit), std::move(ldl), wrss};
}

double hat_trace(const Assembled& a, const BandLdl& ldl, double lambda, std::size_t n) {
  const Band inv = ldl.inverse_band();
  double tr = 0.0;
  for (std::size_t c = 0; c < inv.size(); ++c) {
    tr += inv.d0[c] * a.qwq.d0[c];
    tr += 2.0 * inv.d1[c] * a.qwq.d1[c];
    tr += 2.0 * inv.d2[c] * a.qwq.d2[c];
  }
  return static_cast<double>(n) - lambda * tr;
}

double gcv_from(double wrss, double trace, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double denom = 1.0 - trace / nn;
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return (wrss / nn) / (denom * denom);
}

}  // namespace

double SplineFit::operator()(double x) const {
  const std::size_t n = knots.size();
  if (n == 0) return 0.0;
  if (x <= knots.front()) {
    const double h = knots[1] - knots[0];
    const double slope = (values[1] - values[0]) / h - h * second_derivatives[1] / 6.0;
    return values[0] + slope * (x - knots[0]);
  }
  if (x >= knots.back()) {
    const double h = knots[n - 1] - knots[n - 2];
    const double slope = (values[n - 1] - values[n - 2]) / h + h * second_derivatives[n - 2] / 6.0;
    return values[n - 1] + slope * (x - knots[n - 1]);
  }
  const auto it = std::upper_bound(knots.begin(), knots.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - knots.begin()) - 1;
  const double h = knots[i + 1] - knots[i];
  const double dl = x - knots[i];
  const double dr = knots[i + 1] - x;
  return (dl * values[i + 1] + dr * values[i]) / h -
         dl * dr / 6.0 *
             ((1.0 + dl / h) * second_derivatives[i + 1] + (1.0 + dr / h) * second_derivatives[i]);
}

std::vector<double> SplineFit::operator()(std::span<const double> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back((*this)(x));
  return out;
}

double SplineFit::roughness() const {
  // f'' is piecewise linear between knots.
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double h = knots[i + 1] - knots[i];
    const double a = second_derivatives[i], b = second_derivatives[i + 1];
    total += h * (a * a + a * b + b * b) / 3.0;
  }
  return total;
}

SplineFit fit_spline(const SplineProblem& problem, double lambda) {
  const Assembled a = assemble(problem);
  return solve(problem, a, lambda).fit;
}

GcvEvaluation evaluate_gcv(const SplineProblem& problem, double lambda) {
  const Assembled a = assemble(problem);
  const Solution s = solve(problem, a, lambda);
  const double tr = hat_trace(a, s.ldl, lambda, problem.x.size());
  return {lambda, gcv_from(s.weighted_rss, tr, problem.x.size()), tr};
}

SplineFit fit_spline_gcv(const SplineProblem& problem, double lambda_min, double lambda_max) {
  if (!(lambda_min > 0.0 && lambda_max > lambda_min))
    fail(ErrorCode::InvalidConfig, "GCV search needs 0 < lambda_min < lambda_max");
  const Assembled a = assemble(problem);
  const std::size_t n = problem.x.size();
  auto score = [&](double log_lambda) {
    const double lambda = std::pow(10.0, log_lambda);
    const Solution s = solve(problem, a, lambda);
    return gcv_from(s.weighted_rss, hat_trace(a, s.ldl, lambda, n), n);
  };

  const double lo = std::log10(lambda_min), hi = std::log10(lambda_max);
  const int steps = static_cast<int>(std::ceil((hi - lo) / 0.25));
  const double step = (hi - lo) / steps;
  int best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= steps; ++k) {
    const double s = score(lo + k * step);
    if (s < best_score) {
      best_score = s;
      best = k;
    }
  }

  double left = lo + std::max(best - 1, 0) * step;
  double right = lo + std::min(best + 1, steps) * step;
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = right - ratio * (right - left), d = left + ratio * (right - left);
  double fc = score(c), fd = score(d);
  for (int iter = 0; iter < 40 && right - left > 1e-4; ++iter) {
    if (fc < fd) {
      right = d;
      d = c;
      fd = fc;
      c = right - ratio * (right - left);
      fc = score(c);
    } else {
      left = c;
      c = d;
      fc = fd;
      d = left + ratio * (right - left);
      fd = score(d);
    }
  }
  double best_log = lo + best * step;
  const double mid = 0.5 * (left + right);
  const double fmid = score(mid);
  if (fmid <= best_score) {
    best_log = mid;
    best_score = fmid;
  }

  const double lambda = std::pow(10.0, best_log);
  SplineFit fit = solve(problem, a, lambda).fit;
  fit.gcv_score = best_score;
  return fit;
}

}  // namespace fehforge::preprocess
