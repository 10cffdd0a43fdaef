#include "fehforge/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "fehforge/error.hpp"
#include "fehforge/rng.hpp"

namespace fehforge::synthetic {

double target_feh(double period, double amplitude, double rise) noexcept {
  const double da = amplitude - 0.8;
  return -1.5 - 3.0 * (period - 0.575) + 5.0 * (rise - 0.2) + 0.8 * da + 0.5 * da * da;
}

double sawtooth_brightness(double phase, double rise) noexcept {
  const double decline_end = 1.0 - rise;
  if (phase < decline_end) return 1.0 - phase / decline_end;
  return (phase - decline_end) / rise;
}

SyntheticCorpus generate(const SyntheticConfig& c) {
  if (c.stars == 0 || c.epochs_min < 4 || c.epochs_max < c.epochs_min || !(c.period_min > 0.0) ||
      c.period_max < c.period_min || !(c.rise_min > 0.0) || !(c.rise_max < 1.0))
    fail(ErrorCode::InvalidConfig, "synthetic corpus configuration is out of range");
  SyntheticCorpus out;
  Rng rng(derive_seed(c.seed, "synthetic"));
  for (std::size_t i = 0; i < c.stars; ++i) {
    const double period = rng.uniform(c.period_min, c.period_max);
    const double amplitude = rng.uniform(c.amplitude_min, c.amplitude_max);
    const double rise = rng.uniform(c.rise_min, c.rise_max);
    const int n = c.epochs_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.epochs_max - c.epochs_min + 1)));
    const double mean_mag = rng.uniform(15.0, 19.0);
    const double epoch_max = 2456900.0 + rng.uniform(0.0, period);
    const double t0 = 2457000.0;

    catalog::LightCurve curve;
    curve.source_id = 4000000000000000000ULL + static_cast<std::uint64_t>(i) * 7919ULL;
    std::vector<double> times(static_cast<std::size_t>(n));
    for (double& t : times) t = t0 + rng.uniform(0.0, c.baseline_days);
    std::sort(times.begin(), times.end());
    for (std::size_t k = 1; k < times.size(); ++k)  // keep timestamps strictly increasing
      if (times[k] <= times[k - 1]) times[k] = std::nextafter(times[k - 1], INFINITY);
    for (double t : times) {
      double x = (t - epoch_max) / period;
      const double phase = x - std::floor(x);
      const double mag = mean_mag + amplitude * (0.5 - sawtooth_brightness(phase, rise)) +
                         c.magnitude_noise * rng.normal();
      curve.points.push_back({t, mag});
    }

    const double clean = target_feh(period, amplitude, rise);
    catalog::StarRecord rec;
    rec.id = static_cast<std::int64_t>(i);
    rec.source_id = curve.source_id;
    rec.period = period;
    rec.amp_g = amplitude;
    rec.n_epochs = n;
    rec.feh = clean + c.feh_noise * rng.normal();
    rec.feh_sigma = rng.uniform(0.05, 0.35);
    rec.phi31_sigma = rng.uniform(0.0, 0.08);
    if (c.with_epoch_max) rec.epoch_max = epoch_max;

    out.catalog.push_back(rec);
    out.curves.push_back(std::move(curve));
    out.rise_fraction.push_back(rise);
    out.clean_feh.push_back(clean);
  }
  return out;
}

}  // namespace fehforge::synthetic
