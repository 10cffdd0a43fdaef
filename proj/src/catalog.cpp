#include "fehforge/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "fehforge/error.hpp"
#include "fehforge/rng.hpp"
#include "fehforge/table.hpp"

namespace fehforge::catalog {

namespace {

std::size_t require_column(const DelimitedTable& table, const std::vector<std::string>& aliases) {
  const auto column = table.find_column(aliases);
  if (!column) fail(ErrorCode::MissingColumn, "catalog has no column '" + aliases.front() + "'");
  return *column;
}

std::string where(std::size_t line, const std::string& field) {
  return "line " + std::to_string(line) + ", field '" + field + "'";
}

double finite_field(const std::vector<std::string>& row, std::size_t column, std::size_t line,
                    const std::string& name) {
  const auto value = column < row.size() ? parse_double(row[column]) : std::nullopt;
  if (!value || !std::isfinite(*value)) fail(ErrorCode::ParseError, where(line, name));
  return *value;
}

}  // namespace

void SelectionCriteria::validate() const {
  for (double v : {max_feh_sigma, max_amp_g, max_phi31_sigma}) {
    if (!std::isfinite(v) || v <= 0.0)
      fail(ErrorCode::InvalidConfig, "selection thresholds must be finite and positive");
  }
  if (min_epochs <= 0) fail(ErrorCode::InvalidConfig, "min_epochs must be positive");
  if (!(min_feh < max_feh)) fail(ErrorCode::InvalidConfig, "empty metallicity range");
}

std::string_view to_string(SelectionRule rule) noexcept {
  switch (rule) {
    case SelectionRule::Period: return "period";
    case SelectionRule::FehSigma: return "max_feh_sigma";
    case SelectionRule::AmpG: return "max_amp_g";
    case SelectionRule::MinEpochs: return "min_epochs";
    case SelectionRule::Phi31Sigma: return "max_phi31_sigma";
    case SelectionRule::FehRange: return "feh_range";
  }
  return "unknown";
}

std::string_view to_string(JoinIssueKind kind) noexcept {
  switch (kind) {
    case JoinIssueKind::OrphanStar: return "OrphanStar";
    case JoinIssueKind::DuplicateEpoch: return "DuplicateEpoch";
    case JoinIssueKind::EpochCountMismatch: return "EpochCountMismatch";
  }
  return "unknown";
}

std::vector<StarRecord> parse_catalog(std::string_view text, const CatalogFormat& format) {
  const DelimitedTable table = parse_delimited(text, format.delimiter);
  const ColumnMap& map = format.columns;

  const auto id_col = table.find_column(map.id);
  const std::size_t source_col = require_column(table, map.source_id);
  const std::size_t period_col = require_column(table, map.period);
  const std::size_t amp_col = require_column(table, map.amp_g);
  const std::size_t epochs_col = require_column(table, map.n_epochs);
  const std::size_t feh_col = require_column(table, map.feh);
  const std::size_t sigma_col = require_column(table, map.feh_sigma);
  std::optional<std::size_t> phi31_col = table.find_column(map.phi31_sigma);
  if (!phi31_col && map.require_phi31_sigma) require_column(table, map.phi31_sigma);
  const auto epoch_col = table.find_column(map.epoch_max);

  if (table.rows.empty()) fail(ErrorCode::EmptyCatalog, "catalog has a header but no rows");

  std::vector<StarRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    StarRecord rec;

    if (id_col) {
      const auto id = *id_col < row.size() ? parse_int(row[*id_col]) : std::nullopt;
      if (!id) fail(ErrorCode::ParseError, where(line, "id"));
      rec.id = *id;
    } else {
      rec.id = static_cast<std::int64_t>(r);
    }
    const auto source = source_col < row.size() ? parse_uint64(row[source_col]) : std::nullopt;
    if (!source) fail(ErrorCode::ParseError, where(line, "source_id"));
    rec.source_id = *source;

    rec.period = finite_field(row, period_col, line, "period");
    if (rec.period <= 0.0) fail(ErrorCode::ParseError, where(line, "period") + ": must be > 0");
    rec.amp_g = finite_field(row, amp_col, line, "amp_g");
    if (rec.amp_g <= 0.0) fail(ErrorCode::ParseError, where(line, "amp_g") + ": must be > 0");

    const auto epochs = epochs_col < row.size() ? parse_int(row[epochs_col]) : std::nullopt;
    if (!epochs || *epochs < 1) fail(ErrorCode::ParseError, where(line, "n_epochs"));
    rec.n_epochs = static_cast<int>(*epochs);

    rec.feh = finite_field(row, feh_col, line, "feh");
    rec.feh_sigma = finite_field(row, sigma_col, line, "feh_sigma");
    if (rec.feh_sigma < 0.0) fail(ErrorCode::ParseError, where(line, "feh_sigma") + ": negative");
    if (phi31_col) {
      rec.phi31_sigma = finite_field(row, *phi31_col, line, "phi31_sigma");
      if (rec.phi31_sigma < 0.0)
        fail(ErrorCode::ParseError, where(line, "phi31_sigma") + ": negative");
    }
    if (epoch_col && *epoch_col < row.size() && !trim(row[*epoch_col]).empty()) {
      const auto epoch = parse_double(row[*epoch_col]);
      if (!epoch) fail(ErrorCode::ParseError, where(line, "epoch_max"));
      if (std::isfinite(*epoch)) rec.epoch_max = *epoch;
    }
    records.push_back(rec);
  }
  return records;
}

std::vector<StarRecord> load_catalog(const std::filesystem::path& path,
                                     const CatalogFormat& format) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::MissingInput, "catalog not found: " + path.string());
  return parse_catalog(read_file(path), format);
}

SelectionResult apply_selection(const std::vector<StarRecord>& records,
                                const SelectionCriteria& criteria) {
  criteria.validate();
  SelectionResult result;
  for (const auto& rec : records) {
    std::optional<std::pair<SelectionRule, double>> failure;
    if (!std::isfinite(rec.period) || rec.period <= 0.0)
      failure = {SelectionRule::Period, rec.period};
    else if (!(rec.feh_sigma <= criteria.max_feh_sigma))
      failure = {SelectionRule::FehSigma, rec.feh_sigma};
    else if (!(rec.amp_g <= criteria.max_amp_g))
      failure = {SelectionRule::AmpG, rec.amp_g};
    else if (rec.n_epochs < criteria.min_epochs)
      failure = {SelectionRule::MinEpochs, static_cast<double>(rec.n_epochs)};
    else if (!(rec.phi31_sigma <= criteria.max_phi31_sigma))
      failure = {SelectionRule::Phi31Sigma, rec.phi31_sigma};
    else if (!(rec.feh >= criteria.min_feh && rec.feh <= criteria.max_feh))
      failure = {SelectionRule::FehRange, rec.feh};

    if (failure)
      result.rejected.push_back({rec, failure->first, failure->second});
    else
      result.accepted.push_back(rec);
  }
  return result;
}

Split split_train_validation(const std::vector<StarRecord>& records, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    fail(ErrorCode::InvalidConfig, "train_fraction must lie in (0, 1)");
  const std::size_t n = records.size();
  const auto n_train =
      static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  if (n < 2 || n_train == 0 || n_train >= n)
    fail(ErrorCode::DegenerateSplit, "split of " + std::to_string(n) + " records into " +
                                         std::to_string(n_train) + " training rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(spec.seed, "split"));
  rng.shuffle(order.begin(), order.end());

  std::vector<char> is_train(n, 0);
  for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = 1;

  Split split;
  split.train.reserve(n_train);
  split.validation.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i)
    (is_train[i] ? split.train : split.validation).push_back(records[i]);
  return split;
}

void JoinResult::require_complete() const {
  for (const auto& issue : issues) {
    const std::string msg = "source_id " + std::to_string(issue.source_id) + ": " + issue.detail;
    switch (issue.kind) {
      case JoinIssueKind::OrphanStar: fail(ErrorCode::OrphanStar, msg);
      case JoinIssueKind::DuplicateEpoch: fail(ErrorCode::DuplicateEpoch, msg);
      case JoinIssueKind::EpochCountMismatch: fail(ErrorCode::ParseError, msg);
    }
  }
}

PhotometryTable parse_photometry(std::string_view text, char delimiter) {
  const DelimitedTable table = parse_delimited(text, delimiter);
  const auto source_col = table.find_column({"source_id"});
  const auto time_col = table.find_column({"time_bjd", "g_transit_time", "time"});
  const auto mag_col = table.find_column({"mag_g", "g_transit_mag", "mag"});
  if (!source_col) fail(ErrorCode::MissingColumn, "photometry has no column 'source_id'");
  if (!time_col) fail(ErrorCode::MissingColumn, "photometry has no column 'time_bjd'");
  if (!mag_col) fail(ErrorCode::MissingColumn, "photometry has no column 'mag_g'");

  PhotometryTable out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    const auto id = *source_col < row.size() ? parse_uint64(row[*source_col]) : std::nullopt;
    if (!id) fail(ErrorCode::ParseError, where(line, "source_id"));
    auto finite = [&](std::size_t col, const char* field) {
      const auto v = col < row.size() ? parse_double(row[col]) : std::nullopt;
      if (!v || !std::isfinite(*v)) fail(ErrorCode::ParseError, where(line, field));
      return *v;
    };
    const double t = finite(*time_col, "time_bjd");
    const double m = finite(*mag_col, "mag_g");
    out.push_back({*id, {t, m}});
  }
  return out;
}

PhotometryTable load_photometry(const std::filesystem::path& path, char delimiter) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::MissingInput, "photometry not found: " + path.string());
  return parse_photometry(read_file(path), delimiter);
}

JoinResult join_photometry(const std::vector<StarRecord>& records,
                           const PhotometryTable& photometry) {
  std::unordered_map<std::uint64_t, std::vector<ObservationPoint>> by_source;
  for (const auto& [id, point] : photometry) by_source[id].push_back(point);

  JoinResult result;
  for (const auto& rec : records) {
    const auto it = by_source.find(rec.source_id);
    if (it == by_source.end()) {
      result.issues.push_back({rec.source_id, JoinIssueKind::OrphanStar, "no photometry rows"});
      continue;
    }
    LightCurve curve{rec.source_id, it->second};
    std::stable_sort(curve.points.begin(), curve.points.end(),
                     [](const auto& a, const auto& b) { return a.time < b.time; });
    const auto dup = std::adjacent_find(curve.points.begin(), curve.points.end(),
                                        [](const auto& a, const auto& b) { return a.time == b.time; });
    if (dup != curve.points.end()) {
      result.issues.push_back({rec.source_id, JoinIssueKind::DuplicateEpoch,
                               "repeated timestamp " + format_double(dup->time)});
      continue;
    }
    if (curve.points.size() != static_cast<std::size_t>(rec.n_epochs)) {
      result.issues.push_back({rec.source_id, JoinIssueKind::EpochCountMismatch,
                               "catalog lists " + std::to_string(rec.n_epochs) + " epochs, found " +
                                   std::to_string(curve.points.size())});
      continue;
    }
    result.pairs.emplace_back(rec, std::move(curve));
  }
  return result;
}

JoinResult join_photometry(const std::vector<StarRecord>& records,
                           const std::filesystem::path& photometry_path) {
  return join_photometry(records, load_photometry(photometry_path));
}

std::string format_catalog(const std::vector<StarRecord>& records) {
  std::ostringstream out;
  out << "id,source_id,period,AmpG,#epochs,[Fe/H],sigma[Fe/H],phi31_sigma,epoch_max\n";
  for (const auto& r : records) {
    out << r.id << ',' << r.source_id << ',' << format_double(r.period) << ','
        << format_double(r.amp_g) << ',' << r.n_epochs << ',' << format_double(r.feh) << ','
        << format_double(r.feh_sigma) << ',' << format_double(r.phi31_sigma) << ','
        << (r.epoch_max ? format_double(*r.epoch_max) : std::string()) << '\n';
  }
  return out.str();
}

std::string format_photometry(const std::vector<LightCurve>& curves) {
  std::ostringstream out;
  out << "source_id,time_bjd,mag_g\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out << c.source_id << ',' << format_double(p.time) << ',' << format_double(p.magnitude)
          << '\n';
  return out.str();
}

std::string format_rejections(const std::vector<Rejection>& rejected) {
  std::ostringstream out;
  out << "source_id,failed_rule,offending_value\n";
  for (const auto& r : rejected)
    out << r.record.source_id << ',' << to_string(r.rule) << ','
        << format_double(r.offending_value) << '\n';
  return out.str();
}

}  // namespace fehforge::catalog
