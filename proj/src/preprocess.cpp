#include "fehforge/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "binary_io.hpp"
#include "fehforge/config.hpp"
#include "fehforge/error.hpp"
#include "fehforge/rng.hpp"
#include "fehforge/table.hpp"

namespace fehforge::preprocess {

namespace {

constexpr std::string_view kContainerMagic = "FEHDSET1";
constexpr std::uint32_t kContainerVersion = 1;

double wrap_unit(double x) noexcept {
  double r = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.
  if (r >= 1.0) r = 0.0;
  return r;
}

void sort_by_phase(std::vector<PhasePoint>& points) {
  std::stable_sort(points.begin(), points.end(),
                   [](const PhasePoint& a, const PhasePoint& b) { return a.phase < b.phase; });
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::RawPadded: return "RAW_PADDED";
    case Variant::SplineNoMean: return "SPLINE_NO_MEAN";
    case Variant::Full: return "FULL";
  }
  return "UNKNOWN";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (to_string(v) == name) return v;
  fail(ErrorCode::InvalidConfig, "unknown dataset variant '" + std::string(name) + "'");
}

void PreprocessConfig::validate() const {
  if (resample_length < 8) fail(ErrorCode::InvalidConfig, "resample_length must be >= 8");
  if (spline_degree != 3) fail(ErrorCode::InvalidConfig, "only cubic smoothing splines are supported");
  if (lambda_strategy == LambdaStrategy::Fixed && !(fixed_lambda >= 0.0 && std::isfinite(fixed_lambda)))
    fail(ErrorCode::InvalidConfig, "fixed lambda must be finite and >= 0");
  if (!std::isfinite(pad_value)) fail(ErrorCode::InvalidConfig, "pad_value must be finite");
  if (raw_length < 0) fail(ErrorCode::InvalidConfig, "raw_length must be >= 0");
}

double fold_phase(double time, double period, double epoch_max) noexcept {
  return wrap_unit((time - epoch_max) / period);
}

PhasedCurve phase_fold(const catalog::LightCurve& curve, double period,
                       std::optional<double> epoch_max) {
  if (!(period > 0.0) || !std::isfinite(period))
    fail(ErrorCode::NonFinitePhase, "period must be finite and positive");
  if (epoch_max && !std::isfinite(*epoch_max))
    fail(ErrorCode::NonFinitePhase, "epoch of maximum is not finite");

  PhasedCurve out;
  out.source_id = curve.source_id;
  out.period = period;
  out.epoch_from_catalog = epoch_max.has_value();
  const double zero = epoch_max ? *epoch_max : (curve.points.empty() ? 0.0 : curve.points.front().time);

  double sum = 0.0;
  out.points.reserve(curve.points.size());
  for (const auto& p : curve.points) {
    if (!std::isfinite(p.time)) fail(ErrorCode::NonFinitePhase, "non-finite observation time");
    const double phase = fold_phase(p.time, period, zero);
    if (!std::isfinite(phase)) fail(ErrorCode::NonFinitePhase, "phase overflow");
    out.points.push_back({phase, p.magnitude});
    sum += p.magnitude;
  }
  out.mean_mag = out.points.empty() ? 0.0 : sum / static_cast<double>(out.points.size());
  sort_by_phase(out.points);
  return out;
}

PhasedCurve align_to_maximum(const PhasedCurve& curve) {
  if (curve.points.empty()) fail(ErrorCode::InsufficientPoints, "cannot align an empty curve");
  if (curve.epoch_from_catalog) return curve;
  // points are phase-sorted, so the first minimum is the lowest-phase one
  const auto brightest = std::min_element(
      curve.points.begin(), curve.points.end(),
      [](const PhasePoint& a, const PhasePoint& b) { return a.magnitude < b.magnitude; });
  const auto faintest = std::max_element(
      curve.points.begin(), curve.points.end(),
      [](const PhasePoint& a, const PhasePoint& b) { return a.magnitude < b.magnitude; });
  // A flat curve has no maximum to align on.
  if (faintest->magnitude == brightest->magnitude) return curve;
  const double shift = brightest->phase;
  if (shift == 0.0) return curve;

  PhasedCurve out = curve;
  for (auto& p : out.points) p.phase = wrap_unit(p.phase - shift);
  sort_by_phase(out.points);
  return out;
}

SplineFit fit_smoothing_spline(const PhasedCurve& curve, const PreprocessConfig& config) {
  config.validate();
  // Merge exactly repeated phases into one weighted knot.
  std::vector<double> x, y, w;
  for (const auto& p : curve.points) {
    if (!x.empty() && p.phase == x.back()) {
      const double n = w.back();
      y.back() = (y.back() * n + p.magnitude) / (n + 1.0);
      w.back() = n + 1.0;
    } else {
      x.push_back(p.phase);
      y.push_back(p.magnitude);
      w.push_back(1.0);
    }
  }
  if (x.size() < static_cast<std::size_t>(config.spline_degree + 1))
    fail(ErrorCode::InsufficientPoints,
         "need at least " + std::to_string(config.spline_degree + 1) + " distinct phases, have " +
             std::to_string(x.size()));

  if (config.periodic_extension) {
    x.insert(x.begin(), x.back() - 1.0);
    y.insert(y.begin(), y.back());
    w.insert(w.begin(), w.back());
    x.push_back(x[1] + 1.0);
    y.push_back(y[1]);
    w.push_back(w[1]);
  }

  const SplineProblem problem{x, y, w};
  SplineFit fit = config.lambda_strategy == LambdaStrategy::Fixed
                      ? fit_spline(problem, config.fixed_lambda)
                      : fit_spline_gcv(problem);

  double rss = 0.0;
  for (const auto& p : curve.points) {
    const double e = p.magnitude - fit(p.phase);
    rss += e * e;
  }
  fit.residual_rms = std::sqrt(rss / static_cast<double>(curve.points.size()));
  return fit;
}

std::vector<PhasePoint> resample(const SplineFit& fit, int length) {
  if (length < 2) fail(ErrorCode::InvalidConfig, "resample length must be >= 2");
  std::vector<PhasePoint> out(static_cast<std::size_t>(length));
  for (int k = 0; k < length; ++k) {
    const double phase = static_cast<double>(k) / length;
    out[k] = {phase, fit(phase)};
  }
  return out;
}

int FeatureSeries::valid_steps() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

FeatureSeries build_feature_series(const catalog::StarRecord& star, const PhasedCurve& curve,
                                   Variant variant, const PreprocessConfig& config) {
  config.validate();
  FeatureSeries fs;
  fs.source_id = star.source_id;
  fs.variant = variant;
  fs.feh = star.feh;

  if (variant == Variant::RawPadded) {
    if (config.raw_length <= 0)
      fail(ErrorCode::InvalidConfig, "raw variant needs a positive padded length");
    fs.length = config.raw_length;
    fs.values.assign(static_cast<std::size_t>(fs.length) * 2, config.pad_value);
    fs.mask.assign(static_cast<std::size_t>(fs.length), 0);
    const std::size_t n = std::min(curve.points.size(), static_cast<std::size_t>(fs.length));
    for (std::size_t t = 0; t < n; ++t) {
      fs.values[2 * t] = curve.points[t].magnitude - curve.mean_mag;
      fs.values[2 * t + 1] = curve.points[t].phase * star.period;
      fs.mask[t] = 1;
    }
    return fs;
  }

  const SplineFit fit = fit_smoothing_spline(curve, config);
  const auto grid = resample(fit, config.resample_length);
  fs.length = config.resample_length;
  fs.values.resize(grid.size() * 2);
  fs.mask.assign(grid.size(), 1);
  double mean = 0.0;
  if (variant == Variant::Full) {
    for (const auto& p : grid) mean += p.magnitude;
    mean /= static_cast<double>(grid.size());
  }
  for (std::size_t t = 0; t < grid.size(); ++t) {
    fs.values[2 * t] = grid[t].magnitude - mean;
    fs.values[2 * t + 1] = grid[t].phase * star.period;
  }
  return fs;
}

std::uint64_t DatasetManifest::config_hash() const {
  return fnv1a(config_to_json(config).dump());
}

std::string DatasetManifest::to_json() const {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["variant"] = std::string(to_string(variant));
  j["config"] = config_to_json(config);
  j["config_hash"] = hash_to_hex(config_hash());
  j["input_count"] = input_count;
  j["series_count"] = series_count;
  j["series_length"] = series_length;
  auto& failures_json = j["failures"] = nlohmann::json::array();
  for (const auto& f : failures)
    failures_json.push_back({{"source_id", f.source_id}, {"reason", f.reason}});
  return j.dump(2) + "\n";
}

Dataset build_dataset(const std::vector<std::pair<catalog::StarRecord, catalog::LightCurve>>& pairs,
                      Variant variant, const PreprocessConfig& config, unsigned threads) {
  config.validate();
  PreprocessConfig resolved = config;
  if (variant == Variant::RawPadded && resolved.raw_length == 0) {
    std::size_t longest = 0;
    for (const auto& [star, curve] : pairs) longest = std::max(longest, curve.points.size());
    resolved.raw_length = static_cast<int>(longest);
  }

  const std::size_t n = pairs.size();
  std::vector<std::optional<FeatureSeries>> slots(n);
  std::vector<std::string> errors(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& [star, curve] = pairs[i];
      try {
        const PhasedCurve folded = align_to_maximum(phase_fold(curve, star.period, star.epoch_max));
        slots[i] = build_feature_series(star, folded, variant, resolved);
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = std::min(n, t * chunk), e = std::min(n, b + chunk);
      pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  Dataset out;
  out.manifest.variant = variant;
  out.manifest.config = resolved;
  out.manifest.input_count = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i])
      out.series.push_back(std::move(*slots[i]));
    else
      out.manifest.failures.push_back({pairs[i].first.source_id, errors[i]});
  }
  out.manifest.series_count = out.series.size();
  out.manifest.series_length = variant == Variant::RawPadded ? resolved.raw_length : resolved.resample_length;
  return out;
}

std::string encode_container(const std::vector<FeatureSeries>& series) {
  detail::ByteWriter w;
  w.bytes(kContainerMagic);
  w.u32(kContainerVersion);
  const Variant variant = series.empty() ? Variant::Full : series.front().variant;
  const int length = series.empty() ? 0 : series.front().length;
  w.u32(static_cast<std::uint32_t>(variant));
  w.u32(static_cast<std::uint32_t>(length));
  w.u32(2);
  w.u64(series.size());
  for (const auto& s : series) {
    if (s.variant != variant || s.length != length)
      fail(ErrorCode::ShapeMismatch, "container series must share variant and length");
    w.u64(s.source_id);
    w.f64(s.feh);
    for (auto m : s.mask) w.u8(m);
    for (double v : s.values) w.f64(v);
  }
  return w.take();
}

std::vector<FeatureSeries> decode_container(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(kContainerMagic.size()) != kContainerMagic)
    fail(ErrorCode::FormatError, "not a feature-series container");
  if (const auto version = r.u32(); version != kContainerVersion)
    fail(ErrorCode::FormatError, "unsupported container version " + std::to_string(version));
  const std::uint32_t variant = r.u32();
  if (variant > 2) fail(ErrorCode::FormatError, "bad variant tag");
  const std::uint32_t length = r.u32();
  if (r.u32() != 2) fail(ErrorCode::FormatError, "expected two channels");
  const std::uint64_t count = r.u64();
  std::vector<FeatureSeries> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureSeries s;
    s.variant = static_cast<Variant>(variant);
    s.length = static_cast<int>(length);
    s.source_id = r.u64();
    s.feh = r.f64();
    s.mask.resize(length);
    for (auto& m : s.mask) m = r.u8();
    s.values.resize(static_cast<std::size_t>(length) * 2);
    for (auto& v : s.values) v = r.f64();
    out.push_back(std::move(s));
  }
  if (!r.at_end()) fail(ErrorCode::FormatError, "trailing bytes after container payload");
  return out;
}

void save_container(const std::filesystem::path& path, const std::vector<FeatureSeries>& series) {
  write_file_atomic(path, encode_container(series));
}

std::vector<FeatureSeries> load_container(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::MissingInput, "dataset container not found: " + path.string());
  return decode_container(read_file(path));
}

}  // namespace fehforge::preprocess
