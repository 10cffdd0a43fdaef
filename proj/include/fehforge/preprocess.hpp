#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fehforge/catalog.hpp"
#include "fehforge/spline.hpp"

namespace fehforge::preprocess {

struct PhasePoint {
  double phase = 0.0;
  double magnitude = 0.0;
};

/// A light curve folded on its period. Phases lie in [0, 1) and are sorted.
struct PhasedCurve {
  std::uint64_t source_id = 0;
  std::vector<PhasePoint> points;
  double period = 0.0;
  double mean_mag = 0.0;
  /// True when phase zero came from the catalog's epoch of maximum light.
  bool epoch_from_catalog = false;
};

enum class Variant : std::uint32_t { RawPadded = 0, SplineNoMean = 1, Full = 2 };

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);
inline constexpr Variant kAllVariants[] = {Variant::RawPadded, Variant::SplineNoMean, Variant::Full};

enum class LambdaStrategy { Fixed, PerCurveGcv };

struct PreprocessConfig {
  int resample_length = 100;
  int spline_degree = 3;
  LambdaStrategy lambda_strategy = LambdaStrategy::PerCurveGcv;
  double fixed_lambda = 1e-4;
  /// Sentinel written to padded timesteps of the raw variant.
  double pad_value = -1.0;
  /// Padded length for the raw variant; 0 means the longest curve in the batch.
  int raw_length = 0;
  /// Duplicate the last point at phase - 1 and the first at phase + 1 before fitting.
  bool periodic_extension = true;

  void validate() const;
};

/// Fractional-part folding: phase = x - floor(x), x = (t - epoch_max) / period.
double fold_phase(double time, double period, double epoch_max) noexcept;

/// Folds the curve on `period` with phase zero at `epoch_max` (or at the first
/// observation when the catalog has no epoch). Throws NonFinitePhase.
PhasedCurve phase_fold(const catalog::LightCurve& curve, double period,
                       std::optional<double> epoch_max);

/// Rotates the phases so the brightest (smallest-magnitude) point sits at phase 0, unless
/// phase zero already came from a catalog epoch. Ties go to the lowest phase.
PhasedCurve align_to_maximum(const PhasedCurve& curve);

SplineFit fit_smoothing_spline(const PhasedCurve& curve, const PreprocessConfig& config);

/// Spline values on the grid k/L, k = 0..L-1.
std::vector<PhasePoint> resample(const SplineFit& fit, int length);

/// A two-channel model input: channel 0 magnitude (centred or not), channel 1 phase*period.
struct FeatureSeries {
  std::uint64_t source_id = 0;
  Variant variant = Variant::Full;
  int length = 0;
  std::vector<double> values;  // length x 2, row-major
  std::vector<std::uint8_t> mask;  // 1 = valid timestep
  /// Target metallicity in dex; NaN when unknown.
  double feh = 0.0;

  double channel(int t, int c) const { return values[static_cast<std::size_t>(t) * 2 + c]; }
  int valid_steps() const;

  friend bool operator==(const FeatureSeries&, const FeatureSeries&) = default;
};

/// Builds the model input for one star. For the raw variant `config.raw_length` must be
/// positive (build_dataset resolves it from the batch).
FeatureSeries build_feature_series(const catalog::StarRecord& star, const PhasedCurve& curve,
                                   Variant variant, const PreprocessConfig& config);

struct StarFailure {
  std::uint64_t source_id;
  std::string reason;
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;
  Variant variant = Variant::Full;
  PreprocessConfig config;
  std::size_t input_count = 0;
  std::size_t series_count = 0;
  int series_length = 0;
  std::vector<StarFailure> failures;

  std::uint64_t config_hash() const;
  std::string to_json() const;
};

struct Dataset {
  std::vector<FeatureSeries> series;
  DatasetManifest manifest;
};

/// Folds, aligns and featurises every star. Per-star failures are collected in the
/// manifest and never abort the batch. Output keeps input order.
Dataset build_dataset(const std::vector<std::pair<catalog::StarRecord, catalog::LightCurve>>& pairs,
                      Variant variant, const PreprocessConfig& config, unsigned threads = 1);

/// Binary container, little-endian:
///   "FEHDSET1" | u32 version | u32 variant | u32 length | u32 channels | u64 count
///   then per series: u64 source_id | f64 feh | u8[length] mask | f64[length*channels] values
std::string encode_container(const std::vector<FeatureSeries>& series);
std::vector<FeatureSeries> decode_container(std::string_view bytes);
void save_container(const std::filesystem::path& path, const std::vector<FeatureSeries>& series);
std::vector<FeatureSeries> load_container(const std::filesystem::path& path);

}  // namespace fehforge::preprocess
