#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string_view>
#include <vector>
#include <string>

#include "json.hpp"

#include "fehforge/catalog.hpp"
#include "fehforge/evaluate.hpp"
#include "fehforge/preprocess.hpp"
#include "fehforge/synthetic.hpp"
#include "fehforge/weighting.hpp"
#include "fehforge/zoo.hpp"

namespace fehforge {

using Json = nlohmann::json;

/// 16 lowercase hex digits.
std::string hash_to_hex(std::uint64_t hash);

Json config_to_json(const catalog::SelectionCriteria& c);
Json config_to_json(const preprocess::PreprocessConfig& c);

/// Each reader starts from `base` and overwrites only the keys present in `j`; unknown
/// keys raise InvalidConfig so typos do not pass silently.
catalog::SelectionCriteria selection_from_json(const Json& j, catalog::SelectionCriteria base = {});
preprocess::PreprocessConfig preprocess_from_json(const Json& j,
                                                  preprocess::PreprocessConfig base = {});

[[noreturn]] void throw_invalid_key(const char* key, const std::string& why);

/// Reads `key` from `j` into `out` when present, converting type errors to InvalidConfig.
template <typename T>
void read_key(const Json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw_invalid_key(key, e.what());
  }
}

/// Throws InvalidConfig if `j` has keys outside `allowed`.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* context);

Json config_to_json(const evaluate::TrainConfig& c);
Json config_to_json(const evaluate::GridSpec& g);
Json config_to_json(const synthetic::SyntheticConfig& c);
evaluate::TrainConfig train_from_json(const Json& j, evaluate::TrainConfig base = {});
evaluate::GridSpec grid_from_json(const Json& j, evaluate::GridSpec base = {});
synthetic::SyntheticConfig synthetic_from_json(const Json& j, synthetic::SyntheticConfig base = {});

/// Everything a command needs. The root `seed` feeds every random substream (split,
/// folds, initialisation, dropout, shuffling, synthetic data); per-section seeds are
/// not configurable on their own.
struct RunConfig {
  struct Paths {
    std::filesystem::path catalog;
    std::filesystem::path photometry;
    std::filesystem::path output;
    std::filesystem::path snapshot;  // predict
    std::filesystem::path input;     // predict: dataset container
  } paths;
  char delimiter = ',';
  catalog::SelectionCriteria selection;
  double train_fraction = catalog::SplitSpec{}.train_fraction;
  preprocess::PreprocessConfig preprocess;
  preprocess::Variant variant = preprocess::Variant::Full;
  zoo::ModelSpec model = zoo::build_rnn(zoo::ModelKind::GRU);
  evaluate::TrainConfig train;
  evaluate::GridSpec grid;
  weighting::WeightConfig weighting;
  synthetic::SyntheticConfig synthetic;

  /// Model/variant batch for the metric matrix. `tiny_models` swaps every architecture
  /// for its reduced-size configuration; `epochs`, `folds` and `repeats` override the
  /// training section when non-zero.
  struct Matrix {
    std::vector<zoo::ModelKind> models{std::begin(zoo::kAllModels), std::end(zoo::kAllModels)};
    std::vector<preprocess::Variant> variants{std::begin(preprocess::kAllVariants),
                                              std::end(preprocess::kAllVariants)};
    bool tiny_models = false;
    std::size_t epochs = 0;
    std::size_t folds = 0;
    std::size_t repeats = 0;
  } matrix;

  std::uint64_t seed = 0;
  unsigned threads = 1;

  Json to_json() const;
  /// Keys absent from `j` keep their value from `base`.
  static RunConfig from_json(const Json& j, RunConfig base);
  static RunConfig from_json(const Json& j);
  /// Propagates the root seed and thread count into the sections and validates them.
  void finalize();
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "dotted.key=value" to a config JSON object. The value is parsed as JSON when
/// possible (numbers, booleans, arrays) and taken as a string otherwise.
void apply_override(Json& config, std::string_view assignment);

}  // namespace fehforge
