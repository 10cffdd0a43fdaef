#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fehforge/error.hpp"
#include "fehforge/rng.hpp"
#include "fehforge/weighting.hpp"

using namespace fehforge;
using namespace fehforge::weighting;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// Bulk at -1.5 dex with sparse tails, like the catalog's metallicity distribution.
std::vector<double> peaked_sample(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    v.push_back(u < 0.85 ? -1.5 + 0.25 * rng.normal() : rng.uniform(-3.0, 1.0));
  }
  return v;
}

}  // namespace

TEST(Density, StandardNormalAtZero) {
  Rng rng(1);
  std::vector<double> v(10000);
  for (double& x : v) x = rng.normal();
  const auto d = fit_density(v);
  EXPECT_NEAR(d(0.0), 1.0 / std::sqrt(2.0 * 3.14159265358979323846), 0.03);
}

TEST(Density, IntegratesToOne) {
  const auto d = fit_density(peaked_sample(2000, 4));
  double integral = 0.0;
  const double lo = -8.0, hi = 6.0, h = 1e-3;
  for (double x = lo; x < hi; x += h) integral += d(x + 0.5 * h) * h;
  EXPECT_NEAR(integral, 1.0, 1e-3);
}

TEST(Density, TwoPointSymmetry) {
  const std::vector<double> v{-2.0, 0.0};
  const auto d = fit_density(v, 0.5);
  EXPECT_DOUBLE_EQ(d.bandwidth(), 0.5);
  for (double off : {0.0, 0.1, 0.37, 1.0, 2.5}) EXPECT_NEAR(d(-1.0 + off), d(-1.0 - off), 1e-9);
}

TEST(Density, DegenerateAndBadBandwidth) {
  const std::vector<double> same{-1.2, -1.2, -1.2};
  try {
    fit_density(same);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateDistribution);
  }
  const std::vector<double> ok{0.0, 1.0};
  EXPECT_THROW(fit_density(ok, 0.0), Error);
}

TEST(Density, ScottBandwidth) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  // sample sd = sqrt(5/3), n^(-1/5) = 4^(-0.2)
  EXPECT_NEAR(scott_bandwidth(v), std::sqrt(5.0 / 3.0) * std::pow(4.0, -0.2), 1e-15);
}

TEST(Weights, FlatDensityGivesUnitWeights) {
  const std::vector<double> flat(500, 0.25);
  for (double w : weights_from_density(flat)) EXPECT_NEAR(w, 1.0, 0.05);
}

TEST(Weights, UniformSampleIsFlatInTheInterior) {
  std::vector<double> v;
  for (int i = 0; i < 2001; ++i) v.push_back(-3.0 + 4.0 * i / 2000.0);
  const auto d = fit_density(v);
  const auto w = compute_weights(d, v, {0.0});
  EXPECT_NEAR(mean(w), 1.0, 1e-9);
  // The kernel estimate falls off within a few bandwidths of the edges, so edge stars
  // carry extra weight and the interior level sits below one; it must still be flat.
  std::vector<double> interior;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] > -3.0 + 4 * d.bandwidth() && v[i] < 1.0 - 4 * d.bandwidth()) interior.push_back(w[i]);
  ASSERT_GT(interior.size(), 900u);
  const double level = mean(interior);
  for (double x : interior) EXPECT_NEAR(x / level, 1.0, 0.05);
}

TEST(Weights, PeakBelowTails) {
  const auto v = peaked_sample(3000, 7);
  const auto d = fit_density(v);
  const auto w = compute_weights(d, v);
  double peak_max = 0.0, tail_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i] + 1.5) < 0.1) peak_max = std::max(peak_max, w[i]);
    if (v[i] < -2.6 || v[i] > 0.3) tail_min = std::min(tail_min, w[i]);
  }
  EXPECT_LT(peak_max, tail_min);
  EXPECT_NEAR(mean(w), 1.0, 1e-9);
}

TEST(Weights, ScaleInvarianceAndOrder) {
  const std::vector<double> density{0.5, 0.1, 2.0, 0.25, 1.0};
  std::vector<double> doubled;
  for (double x : density) doubled.push_back(2.0 * x);
  const auto a = weights_from_density(density, {0.0});
  const auto b = weights_from_density(doubled, {0.0});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  for (std::size_t i = 0; i < density.size(); ++i)
    for (std::size_t j = 0; j < density.size(); ++j)
      if (density[i] < density[j]) EXPECT_GT(a[i], a[j]);
  EXPECT_NEAR(mean(a), 1.0, 1e-12);
}

TEST(Weights, CapRenormalisesToMeanOne) {
  std::vector<double> density(50, 1.0);
  density[0] = 1e-4;  // would get ~ 200x the others without a cap
  const auto w = weights_from_density(density, {5.0});
  EXPECT_NEAR(mean(w), 1.0, 1e-9);
  EXPECT_NEAR(w[0], 5.0, 1e-9);
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_NEAR(w[i], (50.0 - 5.0) / 49.0, 1e-9);
  const auto uncapped = weights_from_density(density, {0.0});
  EXPECT_GT(uncapped[0], 40.0);
}

TEST(Weights, ZeroDensityAndBadCap) {
  const std::vector<double> bad{1.0, 0.0};
  try {
    weights_from_density(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroDensity);
  }
  const std::vector<double> ok{1.0, 2.0};
  EXPECT_THROW(weights_from_density(ok, {0.5}), Error);
}

TEST(Weights, ExportFormat) {
  const std::vector<std::uint64_t> ids{7, 9};
  const std::vector<double> feh{-1.0, -2.0}, w{0.5, 1.5};
  const std::string text = format_weights(ids, feh, w);
  EXPECT_EQ(text.substr(0, text.find('\n')), "source_id,feh,weight");
  EXPECT_NE(text.find("9,-2,1.5"), std::string::npos) << text;
}
