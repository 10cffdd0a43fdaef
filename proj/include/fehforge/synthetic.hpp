#pragma once

#include <cstdint>
#include <vector>

#include "fehforge/catalog.hpp"

namespace fehforge::synthetic {

/// RRab-like sawtooth light curves with a metallicity that is a known smooth function of
/// the curve's period, amplitude and rise fraction.
struct SyntheticConfig {
  std::size_t stars = 2000;
  std::uint64_t seed = 0;
  double period_min = 0.4, period_max = 0.75;        // days
  double amplitude_min = 0.4, amplitude_max = 1.2;   // mag
  double rise_min = 0.1, rise_max = 0.3;             // fraction of the cycle spent brightening
  int epochs_min = 50, epochs_max = 90;
  double baseline_days = 1000.0;
  double magnitude_noise = 0.02;                     // mag
  double feh_noise = 0.1;                            // dex
  /// Publish epoch_max in the catalog; otherwise alignment falls back to the brightest point.
  bool with_epoch_max = true;
};

struct SyntheticCorpus {
  std::vector<catalog::StarRecord> catalog;
  std::vector<catalog::LightCurve> curves;
  std::vector<double> rise_fraction;
  /// Noise-free target; catalog feh = clean_feh + N(0, feh_noise²).
  std::vector<double> clean_feh;
};

/// -1.5 - 3(P - 0.575) + 5(s - 0.2) + 0.8(A - 0.8) + 0.5(A - 0.8)²
double target_feh(double period, double amplitude, double rise_fraction) noexcept;

/// Normalised brightness in [0, 1] at `phase`: 1 at phase 0, falling linearly to 0 at
/// phase 1 - rise, rising linearly back to 1.
double sawtooth_brightness(double phase, double rise_fraction) noexcept;

SyntheticCorpus generate(const SyntheticConfig& config);

}  // namespace fehforge::synthetic
