#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fehforge::catalog {

/// One catalog row. Units: period in days, amplitude in mag, metallicity in dex.
struct StarRecord {
  std::int64_t id = 0;
  std::uint64_t source_id = 0;
  double period = 0.0;
  double amp_g = 0.0;
  int n_epochs = 0;
  double feh = 0.0;
  double feh_sigma = 0.0;
  double phi31_sigma = 0.0;
  /// Barycentric Julian Day of maximum light, when the catalog provides it.
  std::optional<double> epoch_max;

  friend bool operator==(const StarRecord&, const StarRecord&) = default;
};

struct ObservationPoint {
  double time = 0.0;       // BJD
  double magnitude = 0.0;  // G mag
};

struct LightCurve {
  std::uint64_t source_id = 0;
  std::vector<ObservationPoint> points;
};

struct SelectionCriteria {
  double max_feh_sigma = 0.4;
  double max_amp_g = 1.4;
  int min_epochs = 50;
  double max_phi31_sigma = 0.10;
  /// Accepted metallicity range; catalog values are documented to lie in [-3, 1].
  double min_feh = -3.0;
  double max_feh = 1.0;

  void validate() const;
};

/// Rules are checked in this order; a rejection carries the first failing one.
enum class SelectionRule { Period, FehSigma, AmpG, MinEpochs, Phi31Sigma, FehRange };

std::string_view to_string(SelectionRule rule) noexcept;

struct Rejection {
  StarRecord record;
  SelectionRule rule;
  double offending_value;
};

struct SelectionResult {
  std::vector<StarRecord> accepted;
  std::vector<Rejection> rejected;
};

/// Header aliases for each StarRecord field, matched case-insensitively. The defaults
/// cover the catalog's own column names plus common archive spellings.
struct ColumnMap {
  std::vector<std::string> id{"id"};
  std::vector<std::string> source_id{"source_id"};
  std::vector<std::string> period{"period", "pf"};
  std::vector<std::string> amp_g{"AmpG", "amp_g", "peak_to_peak_g"};
  std::vector<std::string> n_epochs{"#epochs", "n_epochs", "num_clean_epochs_g"};
  std::vector<std::string> feh{"[Fe/H]", "feh", "metallicity"};
  std::vector<std::string> feh_sigma{"σ[Fe/H]", "sigma[Fe/H]", "feh_sigma", "sigma_feh",
                                     "metallicity_error"};
  std::vector<std::string> phi31_sigma{"phi31_sigma", "sigma_phi31", "phi31_g_error"};
  std::vector<std::string> epoch_max{"epoch_max", "epoch_g"};
  /// The phi31 cut needs this column; relaxing it makes every star pass that rule.
  bool require_phi31_sigma = true;
};

struct CatalogFormat {
  char delimiter = ',';
  ColumnMap columns;
};

/// Loads a catalog file. Throws MissingColumn, ParseError (with line and field) or
/// EmptyCatalog.
std::vector<StarRecord> load_catalog(const std::filesystem::path& path,
                                     const CatalogFormat& format = {});
std::vector<StarRecord> parse_catalog(std::string_view text, const CatalogFormat& format = {});

SelectionResult apply_selection(const std::vector<StarRecord>& records,
                                const SelectionCriteria& criteria);

struct SplitSpec {
  /// round(0.7999 * 6002) = 4801 training rows.
  double train_fraction = 0.7999;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<StarRecord> train;
  std::vector<StarRecord> validation;
};

/// Seeded shuffle followed by a prefix cut. Both halves keep input order.
Split split_train_validation(const std::vector<StarRecord>& records, const SplitSpec& spec);

enum class JoinIssueKind { OrphanStar, DuplicateEpoch, EpochCountMismatch };

std::string_view to_string(JoinIssueKind kind) noexcept;

struct JoinIssue {
  std::uint64_t source_id;
  JoinIssueKind kind;
  std::string detail;
};

struct JoinResult {
  std::vector<std::pair<StarRecord, LightCurve>> pairs;
  std::vector<JoinIssue> issues;

  /// Throws OrphanStar / DuplicateEpoch for the first issue, if any.
  void require_complete() const;
};

using PhotometryTable = std::vector<std::pair<std::uint64_t, ObservationPoint>>;

PhotometryTable load_photometry(const std::filesystem::path& path, char delimiter = ',');
PhotometryTable parse_photometry(std::string_view text, char delimiter = ',');

/// Pairs every record with its time-sorted light curve. Stars without photometry, with
/// repeated timestamps, or whose epoch count disagrees with the catalog are reported in
/// `issues` and left out of `pairs`.
JoinResult join_photometry(const std::vector<StarRecord>& records,
                           const PhotometryTable& photometry);
JoinResult join_photometry(const std::vector<StarRecord>& records,
                           const std::filesystem::path& photometry_path);

std::string format_catalog(const std::vector<StarRecord>& records);
std::string format_photometry(const std::vector<LightCurve>& curves);
/// Rejection report: source_id, failed_rule, offending_value.
std::string format_rejections(const std::vector<Rejection>& rejected);

}  // namespace fehforge::catalog
