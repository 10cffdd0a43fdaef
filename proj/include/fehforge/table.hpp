#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fehforge {

/// A delimiter-separated text table with a mandatory header row. Fields are trimmed of
/// surrounding whitespace; blank lines and lines starting with '#' are skipped.
struct DelimitedTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number in the source file for each row.
  std::vector<std::size_t> line_numbers;

  /// Case-insensitive header lookup over a list of accepted aliases.
  std::optional<std::size_t> find_column(const std::vector<std::string>& aliases) const;
};

DelimitedTable read_delimited(const std::filesystem::path& path, char delimiter = ',');
DelimitedTable parse_delimited(std::string_view text, char delimiter = ',');

std::string_view trim(std::string_view s) noexcept;

/// Strict numeric parsing: the whole field must be consumed. "nan"/"inf" parse as
/// non-finite values and are left to the caller to reject.
std::optional<double> parse_double(std::string_view s) noexcept;
std::optional<long long> parse_int(std::string_view s) noexcept;
std::optional<unsigned long long> parse_uint64(std::string_view s) noexcept;

/// Shortest text form that parses back to the identical double.
std::string format_double(double value);

/// Writes `contents` to `path` via a temporary sibling and an atomic rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace fehforge
