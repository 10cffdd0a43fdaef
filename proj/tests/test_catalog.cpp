#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <string>

#include "fehforge/catalog.hpp"
#include "fehforge/error.hpp"

using namespace fehforge;
using namespace fehforge::catalog;

namespace {

constexpr const char* kMinimalHeader = "id,source_id,period,AmpG,#epochs,[Fe/H],sigma[Fe/H]\n";

CatalogFormat minimal_format() {
  CatalogFormat f;
  f.columns.require_phi31_sigma = false;
  return f;
}

StarRecord passing(std::uint64_t id) {
  StarRecord r;
  r.id = static_cast<std::int64_t>(id);
  r.source_id = 1000 + id;
  r.period = 0.55;
  r.amp_g = 0.8;
  r.n_epochs = 60;
  r.feh = -1.5;
  r.feh_sigma = 0.2;
  r.phi31_sigma = 0.05;
  return r;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an exception";
  return ErrorCode::InvalidConfig;
}

}  // namespace

TEST(Catalog, ParsesMinimalRow) {
  const auto rows = parse_catalog(std::string(kMinimalHeader) +
                                      "0, 5978423987417346304, 0.415071, 0.61029154, 53, -0.144963, 0.398111\n",
                                  minimal_format());
  ASSERT_EQ(rows.size(), 1u);
  const StarRecord& r = rows[0];
  EXPECT_EQ(r.id, 0);
  EXPECT_EQ(r.source_id, 5978423987417346304ULL);
  EXPECT_DOUBLE_EQ(r.period, 0.415071);
  EXPECT_DOUBLE_EQ(r.amp_g, 0.61029154);
  EXPECT_EQ(r.n_epochs, 53);
  EXPECT_DOUBLE_EQ(r.feh, -0.144963);
  EXPECT_DOUBLE_EQ(r.feh_sigma, 0.398111);
  EXPECT_FALSE(r.epoch_max.has_value());
}

TEST(Catalog, MinimalRowIsAccepted) {
  const auto rows = parse_catalog(std::string(kMinimalHeader) +
                                      "0,5978423987417346304,0.415071,0.61029154,53,-0.144963,0.398111\n",
                                  minimal_format());
  const auto result = apply_selection(rows, {});
  EXPECT_EQ(result.accepted.size(), 1u);
  EXPECT_TRUE(result.rejected.empty());
}

TEST(Catalog, HeaderOnlyIsEmptyCatalog) {
  EXPECT_EQ(code_of([] { parse_catalog(kMinimalHeader, minimal_format()); }), ErrorCode::EmptyCatalog);
}

TEST(Catalog, NanPeriodIsParseErrorWithRow) {
  try {
    parse_catalog(std::string(kMinimalHeader) + "0,1,0.5,0.6,53,-1,0.1\n1,2,NaN,0.6,53,-1,0.1\n", minimal_format());
    FAIL() << "expected ParseError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("period"), std::string::npos) << msg;
    EXPECT_NE(msg.find('3'), std::string::npos) << msg;  // third line of the file
  }
}

TEST(Catalog, MissingColumnIsNamed) {
  try {
    parse_catalog("id,source_id,AmpG,#epochs,[Fe/H],sigma[Fe/H]\n0,1,0.6,53,-1,0.1\n", minimal_format());
    FAIL() << "expected MissingColumn";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingColumn);
    EXPECT_NE(std::string(e.what()).find("period"), std::string::npos);
  }
}

TEST(Catalog, Phi31ColumnRequiredByDefault) {
  EXPECT_EQ(code_of([] { parse_catalog(std::string(kMinimalHeader) + "0,1,0.5,0.6,53,-1,0.1\n"); }),
            ErrorCode::MissingColumn);
}

TEST(Catalog, AlternateHeadersAndTabDelimiter) {
  CatalogFormat f;
  f.delimiter = '\t';
  const auto rows = parse_catalog(
      "source_id\tpf\tpeak_to_peak_g\tnum_clean_epochs_g\tmetallicity\tmetallicity_error\tphi31_g_error\tepoch_g\n"
      "7\t0.6\t0.9\t70\t-1.2\t0.1\t0.02\t1700.5\n",
      f);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].source_id, 7u);
  EXPECT_DOUBLE_EQ(rows[0].phi31_sigma, 0.02);
  ASSERT_TRUE(rows[0].epoch_max);
  EXPECT_DOUBLE_EQ(*rows[0].epoch_max, 1700.5);
}

TEST(Selection, BoundariesAndRuleOrder) {
  std::vector<StarRecord> records;
  auto r = passing(0);
  r.n_epochs = 49;
  records.push_back(r);  // min_epochs
  r = passing(1);
  r.feh_sigma = 0.4;
  records.push_back(r);  // inclusive boundary: accepted
  r = passing(2);
  r.amp_g = 1.41;
  r.n_epochs = 10;
  records.push_back(r);  // amp_g fails before min_epochs
  r = passing(3);
  r.phi31_sigma = 0.1000001;
  records.push_back(r);
  r = passing(4);
  r.feh = 1.2;
  records.push_back(r);
  r = passing(5);
  r.period = std::numeric_limits<double>::quiet_NaN();
  records.push_back(r);

  const auto result = apply_selection(records, {});
  ASSERT_EQ(result.accepted.size(), 1u);
  EXPECT_EQ(result.accepted[0].id, 1);
  ASSERT_EQ(result.rejected.size(), 5u);
  EXPECT_EQ(result.rejected[0].rule, SelectionRule::MinEpochs);
  EXPECT_DOUBLE_EQ(result.rejected[0].offending_value, 49.0);
  EXPECT_EQ(result.rejected[1].rule, SelectionRule::AmpG);
  EXPECT_EQ(result.rejected[2].rule, SelectionRule::Phi31Sigma);
  EXPECT_EQ(result.rejected[3].rule, SelectionRule::FehRange);
  EXPECT_EQ(result.rejected[4].rule, SelectionRule::Period);
}

TEST(Selection, AllRejectedIsNotAnError) {
  auto r = passing(0);
  r.feh_sigma = 1.0;
  const auto result = apply_selection({r, r}, {});
  EXPECT_TRUE(result.accepted.empty());
  EXPECT_EQ(result.rejected.size(), 2u);
  const std::string report = format_rejections(result.rejected);
  EXPECT_EQ(report.substr(0, report.find('\n')), "source_id,failed_rule,offending_value");
}

TEST(Selection, IdempotentOrderIndependentAndRechecked) {
  std::vector<StarRecord> records;
  for (std::uint64_t i = 0; i < 200; ++i) {
    auto r = passing(i);
    r.feh_sigma = 0.01 * static_cast<double>(i % 50);
    r.amp_g = 0.5 + 0.005 * static_cast<double>(i);
    r.n_epochs = 40 + static_cast<int>(i % 30);
    records.push_back(r);
  }
  const SelectionCriteria c;
  const auto once = apply_selection(records, c);
  const auto twice = apply_selection(once.accepted, c);
  EXPECT_EQ(once.accepted, twice.accepted);
  EXPECT_TRUE(twice.rejected.empty());

  auto reversed = records;
  std::reverse(reversed.begin(), reversed.end());
  auto rev = apply_selection(reversed, c).accepted;
  std::reverse(rev.begin(), rev.end());
  EXPECT_EQ(rev, once.accepted);

  for (const auto& a : once.accepted) {
    EXPECT_LE(a.feh_sigma, c.max_feh_sigma);
    EXPECT_LE(a.amp_g, c.max_amp_g);
    EXPECT_GE(a.n_epochs, c.min_epochs);
    EXPECT_LE(a.phi31_sigma, c.max_phi31_sigma);
  }
}

TEST(Split, CountsFor6002Stars) {
  std::vector<StarRecord> records;
  for (std::uint64_t i = 0; i < 6002; ++i) records.push_back(passing(i));
  const auto split = split_train_validation(records, {});
  EXPECT_EQ(split.train.size(), 4801u);
  EXPECT_EQ(split.validation.size(), 1201u);
  std::set<std::uint64_t> ids;
  for (const auto& r : split.train) ids.insert(r.source_id);
  for (const auto& r : split.validation) ids.insert(r.source_id);
  EXPECT_EQ(ids.size(), 6002u);
}

TEST(Split, DeterministicAndSeedSensitive) {
  std::vector<StarRecord> records;
  for (std::uint64_t i = 0; i < 100; ++i) records.push_back(passing(i));
  const auto a = split_train_validation(records, {0.8, 11});
  const auto b = split_train_validation(records, {0.8, 11});
  const auto c = split_train_validation(records, {0.8, 12});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_NE(a.train, c.train);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end(),
                             [](const StarRecord& x, const StarRecord& y) { return x.id < y.id; }));
}

TEST(Split, DegenerateInputs) {
  EXPECT_EQ(code_of([] { split_train_validation({passing(0)}, {}); }), ErrorCode::DegenerateSplit);
  EXPECT_EQ(code_of([] { split_train_validation({passing(0), passing(1)}, {0.1, 0}); }),
            ErrorCode::DegenerateSplit);
}

TEST(Join, PairsSortsAndReportsIssues) {
  auto a = passing(1);
  a.n_epochs = 3;
  auto b = passing(2);
  b.n_epochs = 2;
  auto orphan = passing(3);
  auto mismatch = passing(4);
  mismatch.n_epochs = 5;
  const std::string phot =
      "source_id,time_bjd,mag_g\n"
      "1001,3.0,15.3\n1001,1.0,15.1\n1001,2.0,15.2\n"
      "1002,5.0,16.0\n1002,5.0,16.1\n"
      "1004,1.0,17.0\n";
  const auto result = join_photometry({a, b, orphan, mismatch}, parse_photometry(phot));
  ASSERT_EQ(result.pairs.size(), 1u);
  const auto& curve = result.pairs[0].second;
  ASSERT_EQ(curve.points.size(), 3u);
  EXPECT_DOUBLE_EQ(curve.points[0].time, 1.0);
  EXPECT_DOUBLE_EQ(curve.points[2].magnitude, 15.3);
  ASSERT_EQ(result.issues.size(), 3u);
  EXPECT_EQ(result.issues[0].kind, JoinIssueKind::DuplicateEpoch);
  EXPECT_EQ(result.issues[1].kind, JoinIssueKind::OrphanStar);
  EXPECT_EQ(result.issues[1].source_id, 1003u);
  EXPECT_EQ(result.issues[2].kind, JoinIssueKind::EpochCountMismatch);
  EXPECT_EQ(code_of([&] { result.require_complete(); }), ErrorCode::DuplicateEpoch);
}

TEST(Join, FiftyThreeEpochStar) {
  auto r = passing(0);
  r.n_epochs = 53;
  PhotometryTable table;
  for (int i = 0; i < 53; ++i) table.push_back({r.source_id, {1000.0 + 0.7 * (52 - i), 16.0}});
  const auto result = join_photometry({r}, table);
  ASSERT_EQ(result.pairs.size(), 1u);
  EXPECT_EQ(result.pairs[0].second.points.size(), 53u);
}

TEST(Catalog, FormatRoundTrip) {
  auto r = passing(5);
  r.epoch_max = 1234.5;
  const auto back = parse_catalog(format_catalog({r, passing(6)}));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], r);
  EXPECT_EQ(back[1], passing(6));
}
