#include "fehforge/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fehforge/error.hpp"
#include "fehforge/table.hpp"

namespace fehforge::weighting {

DensityModel::DensityModel(std::vector<double> support, double bandwidth)
    : support_(std::move(support)), bandwidth_(bandwidth) {
  if (support_.empty()) fail(ErrorCode::DegenerateDistribution, "density support is empty");
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_))
    fail(ErrorCode::InvalidConfig, "bandwidth must be positive and finite");
  std::sort(support_.begin(), support_.end());
}

double DensityModel::operator()(double x) const {
  // Kernels further than 40 bandwidths contribute below double resolution.
  const double reach = 40.0 * bandwidth_;
  const auto lo = std::lower_bound(support_.begin(), support_.end(), x - reach);
  const auto hi = std::upper_bound(lo, support_.end(), x + reach);
  double sum = 0.0;
  for (auto it = lo; it != hi; ++it) {
    const double u = (x - *it) / bandwidth_;
    sum += std::exp(-0.5 * u * u);
  }
  const double norm = 1.0 / (static_cast<double>(support_.size()) * bandwidth_ *
                             std::sqrt(2.0 * std::numbers::pi));
  return sum * norm;
}

std::vector<double> DensityModel::evaluate(std::span<const double> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back((*this)(x));
  return out;
}

double scott_bandwidth(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0)) * std::pow(n, -0.2);
}

DensityModel fit_density(std::span<const double> feh_values, std::optional<double> bandwidth) {
  for (double v : feh_values)
    if (!std::isfinite(v)) fail(ErrorCode::DegenerateDistribution, "non-finite value in density sample");
  const auto [mn, mx] = std::minmax_element(feh_values.begin(), feh_values.end());
  if (feh_values.size() < 2 || *mn == *mx)
    fail(ErrorCode::DegenerateDistribution, "density needs at least two distinct values");
  const double bw = bandwidth ? *bandwidth : scott_bandwidth(feh_values);
  return DensityModel(std::vector<double>(feh_values.begin(), feh_values.end()), bw);
}

std::vector<double> weights_from_density(std::span<const double> density, const WeightConfig& config) {
  if (config.cap != 0.0 && !(config.cap >= 1.0))
    fail(ErrorCode::InvalidConfig, "weight cap must be at least 1 (or 0 to disable)");
  const std::size_t n = density.size();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(density[i] > 0.0) || !std::isfinite(density[i]))
      fail(ErrorCode::ZeroDensity, "density at sample " + std::to_string(i) + " is " +
                                       format_double(density[i]));
    w[i] = 1.0 / density[i];
    if (!std::isfinite(w[i])) fail(ErrorCode::ZeroDensity, "density underflows at sample " + std::to_string(i));
  }
  if (n == 0) return w;

  // Find the scale c with mean(min(c w, cap)) = 1. Each pass caps at least one more
  // weight or terminates, so at most n passes are needed.
  std::vector<bool> capped(n, false);
  for (std::size_t pass = 0; pass <= n; ++pass) {
    double free_sum = 0.0;
    std::size_t n_capped = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (capped[i])
        ++n_capped;
      else
        free_sum += w[i];
    }
    const double budget = static_cast<double>(n) - static_cast<double>(n_capped) * config.cap;
    const double c = budget / free_sum;
    bool changed = false;
    if (config.cap > 0.0)
      for (std::size_t i = 0; i < n; ++i)
        if (!capped[i] && c * w[i] > config.cap) capped[i] = changed = true;
    if (!changed) {
      for (std::size_t i = 0; i < n; ++i) w[i] = capped[i] ? config.cap : c * w[i];
      return w;
    }
  }
  return w;  // unreachable: every pass caps a new index
}

std::vector<double> compute_weights(const DensityModel& model, std::span<const double> feh_values,
                                    const WeightConfig& config) {
  return weights_from_density(model.evaluate(feh_values), config);
}

std::string format_weights(std::span<const std::uint64_t> source_ids, std::span<const double> feh,
                           std::span<const double> weights) {
  if (source_ids.size() != weights.size() || feh.size() != weights.size())
    fail(ErrorCode::ShapeMismatch, "weight export columns differ in length");
  std::string out = "source_id,feh,weight\n";
  for (std::size_t i = 0; i < weights.size(); ++i)
    out += std::to_string(source_ids[i]) + "," + format_double(feh[i]) + "," + format_double(weights[i]) + "\n";
  return out;
}

}  // namespace fehforge::weighting
