#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fehforge::weighting {

/// Gaussian kernel density estimate over a fixed support sample.
class DensityModel {
 public:
  DensityModel(std::vector<double> support, double bandwidth);

  double operator()(double x) const;
  std::vector<double> evaluate(std::span<const double> xs) const;

  double bandwidth() const noexcept { return bandwidth_; }
  const std::vector<double>& support() const noexcept { return support_; }

 private:
  std::vector<double> support_;  // sorted
  double bandwidth_;
};

/// Scott's rule: σ n^(-1/5) with the sample standard deviation (n - 1 denominator).
double scott_bandwidth(std::span<const double> values);

/// Throws DegenerateDistribution when fewer than two distinct values are given, and
/// InvalidConfig for a non-positive explicit bandwidth.
DensityModel fit_density(std::span<const double> feh_values, std::optional<double> bandwidth = {});

struct WeightConfig {
  /// Upper bound on a single weight after mean-one normalisation; 0 disables the cap.
  double cap = 20.0;
};

/// Weights proportional to 1/density, rescaled to mean one, then capped with the
/// uncapped weights rescaled so the mean stays one. Only the shape of `density`
/// matters. Throws ZeroDensity for non-positive or non-finite densities.
std::vector<double> weights_from_density(std::span<const double> density, const WeightConfig& config = {});

std::vector<double> compute_weights(const DensityModel& model, std::span<const double> feh_values,
                                    const WeightConfig& config = {});

/// Delimited export: source_id, feh, weight.
std::string format_weights(std::span<const std::uint64_t> source_ids, std::span<const double> feh,
                           std::span<const double> weights);

}  // namespace fehforge::weighting
