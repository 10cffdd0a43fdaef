#include "fehforge/config.hpp"

#include <cstdio>
#include <cstring>

#include "fehforge/error.hpp"
#include "fehforge/table.hpp"

namespace fehforge {

std::string hash_to_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

void throw_invalid_key(const char* key, const std::string& why) {
  fail(ErrorCode::InvalidConfig, std::string("key '") + key + "': " + why);
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* context) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, std::string(context) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail(ErrorCode::InvalidConfig, std::string(context) + ": unknown key '" + key + "'");
  }
}

Json config_to_json(const catalog::SelectionCriteria& c) {
  return {{"max_feh_sigma", c.max_feh_sigma}, {"max_amp_g", c.max_amp_g},
          {"min_epochs", c.min_epochs},       {"max_phi31_sigma", c.max_phi31_sigma},
          {"min_feh", c.min_feh},             {"max_feh", c.max_feh}};
}

Json config_to_json(const preprocess::PreprocessConfig& c) {
  return {{"resample_length", c.resample_length},
          {"spline_degree", c.spline_degree},
          {"lambda_strategy", c.lambda_strategy == preprocess::LambdaStrategy::Fixed ? "fixed" : "gcv"},
          {"fixed_lambda", c.fixed_lambda},
          {"pad_value", c.pad_value},
          {"raw_length", c.raw_length},
          {"periodic_extension", c.periodic_extension}};
}

catalog::SelectionCriteria selection_from_json(const Json& j, catalog::SelectionCriteria c) {
  check_keys(j, {"max_feh_sigma", "max_amp_g", "min_epochs", "max_phi31_sigma", "min_feh", "max_feh"},
             "selection");
  read_key(j, "max_feh_sigma", c.max_feh_sigma);
  read_key(j, "max_amp_g", c.max_amp_g);
  read_key(j, "min_epochs", c.min_epochs);
  read_key(j, "max_phi31_sigma", c.max_phi31_sigma);
  read_key(j, "min_feh", c.min_feh);
  read_key(j, "max_feh", c.max_feh);
  c.validate();
  return c;
}

preprocess::PreprocessConfig preprocess_from_json(const Json& j, preprocess::PreprocessConfig c) {
  check_keys(j, {"resample_length", "spline_degree", "lambda_strategy", "fixed_lambda", "pad_value",
                 "raw_length", "periodic_extension"},
             "preprocess");
  read_key(j, "resample_length", c.resample_length);
  read_key(j, "spline_degree", c.spline_degree);
  std::string strategy;
  read_key(j, "lambda_strategy", strategy);
  if (strategy == "fixed")
    c.lambda_strategy = preprocess::LambdaStrategy::Fixed;
  else if (strategy == "gcv")
    c.lambda_strategy = preprocess::LambdaStrategy::PerCurveGcv;
  else if (!strategy.empty())
    fail(ErrorCode::InvalidConfig, "preprocess.lambda_strategy must be 'fixed' or 'gcv'");
  read_key(j, "fixed_lambda", c.fixed_lambda);
  read_key(j, "pad_value", c.pad_value);
  read_key(j, "raw_length", c.raw_length);
  read_key(j, "periodic_extension", c.periodic_extension);
  c.validate();
  return c;
}

Json config_to_json(const evaluate::TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"folds", c.folds},
          {"repeats", c.repeats},
          {"stratification_bins", c.stratification_bins},
          {"divergence_factor", c.divergence_factor}};
}

evaluate::TrainConfig train_from_json(const Json& j, evaluate::TrainConfig c) {
  check_keys(j, {"batch_size", "learning_rate", "max_epochs", "patience", "folds", "repeats",
                 "stratification_bins", "divergence_factor"},
             "train");
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "max_epochs", c.max_epochs);
  read_key(j, "patience", c.patience);
  read_key(j, "folds", c.folds);
  read_key(j, "repeats", c.repeats);
  read_key(j, "stratification_bins", c.stratification_bins);
  read_key(j, "divergence_factor", c.divergence_factor);
  return c;
}

Json config_to_json(const evaluate::GridSpec& g) {
  return {{"dropout_rates", g.dropout_rates}, {"learning_rates", g.learning_rates}, {"batch_sizes", g.batch_sizes}};
}

evaluate::GridSpec grid_from_json(const Json& j, evaluate::GridSpec g) {
  check_keys(j, {"dropout_rates", "learning_rates", "batch_sizes"}, "grid");
  read_key(j, "dropout_rates", g.dropout_rates);
  read_key(j, "learning_rates", g.learning_rates);
  read_key(j, "batch_sizes", g.batch_sizes);
  g.cells();  // validates the axes
  return g;
}

Json config_to_json(const synthetic::SyntheticConfig& c) {
  return {{"stars", c.stars},
          {"period_range", {c.period_min, c.period_max}},
          {"amplitude_range", {c.amplitude_min, c.amplitude_max}},
          {"rise_range", {c.rise_min, c.rise_max}},
          {"epochs_range", {c.epochs_min, c.epochs_max}},
          {"baseline_days", c.baseline_days},
          {"magnitude_noise", c.magnitude_noise},
          {"feh_noise", c.feh_noise},
          {"with_epoch_max", c.with_epoch_max}};
}

synthetic::SyntheticConfig synthetic_from_json(const Json& j, synthetic::SyntheticConfig c) {
  check_keys(j, {"stars", "period_range", "amplitude_range", "rise_range", "epochs_range", "baseline_days",
                 "magnitude_noise", "feh_noise", "with_epoch_max"},
             "synthetic");
  auto range = [&](const char* key, auto& lo, auto& hi) {
    std::vector<std::decay_t<decltype(lo)>> v{lo, hi};
    read_key(j, key, v);
    if (v.size() != 2) throw_invalid_key(key, "expected [min, max]");
    lo = v[0];
    hi = v[1];
  };
  read_key(j, "stars", c.stars);
  range("period_range", c.period_min, c.period_max);
  range("amplitude_range", c.amplitude_min, c.amplitude_max);
  range("rise_range", c.rise_min, c.rise_max);
  range("epochs_range", c.epochs_min, c.epochs_max);
  read_key(j, "baseline_days", c.baseline_days);
  read_key(j, "magnitude_noise", c.magnitude_noise);
  read_key(j, "feh_noise", c.feh_noise);
  read_key(j, "with_epoch_max", c.with_epoch_max);
  return c;
}

// -------------------------------------------------------------------- RunConfig

Json RunConfig::to_json() const {
  Json j;
  j["paths"] = {{"catalog", paths.catalog.string()},
                {"photometry", paths.photometry.string()},
                {"output", paths.output.string()},
                {"snapshot", paths.snapshot.string()},
                {"input", paths.input.string()}};
  j["delimiter"] = std::string(1, delimiter);
  j["selection"] = config_to_json(selection);
  j["train_fraction"] = train_fraction;
  j["preprocess"] = config_to_json(preprocess);
  j["variant"] = std::string(preprocess::to_string(variant));
  j["model"] = model.to_json();
  j["train"] = config_to_json(train);
  j["grid"] = config_to_json(grid);
  j["weighting"] = {{"cap", weighting.cap}};
  j["synthetic"] = config_to_json(synthetic);
  Json models = Json::array(), variants = Json::array();
  for (auto m : matrix.models) models.push_back(std::string(zoo::to_string(m)));
  for (auto v : matrix.variants) variants.push_back(std::string(preprocess::to_string(v)));
  j["matrix"] = {{"models", models},         {"variants", variants},
                 {"tiny_models", matrix.tiny_models}, {"epochs", matrix.epochs},
                 {"folds", matrix.folds},     {"repeats", matrix.repeats}};
  j["seed"] = seed;
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const Json& j, RunConfig c) {
  check_keys(j, {"paths", "delimiter", "selection", "train_fraction", "preprocess", "variant", "model", "train",
                 "grid", "weighting", "synthetic", "matrix", "seed", "threads"},
             "config");
  if (const auto it = j.find("paths"); it != j.end()) {
    check_keys(*it, {"catalog", "photometry", "output", "snapshot", "input"}, "paths");
    auto path = [&](const char* key, std::filesystem::path& out) {
      std::string s = out.string();
      read_key(*it, key, s);
      out = s;
    };
    path("catalog", c.paths.catalog);
    path("photometry", c.paths.photometry);
    path("output", c.paths.output);
    path("snapshot", c.paths.snapshot);
    path("input", c.paths.input);
  }
  std::string delimiter(1, c.delimiter);
  read_key(j, "delimiter", delimiter);
  if (delimiter == "\\t" || delimiter == "tab") delimiter = "\t";
  if (delimiter.size() != 1) throw_invalid_key("delimiter", "must be a single character");
  c.delimiter = delimiter[0];
  if (const auto it = j.find("selection"); it != j.end()) c.selection = selection_from_json(*it, c.selection);
  read_key(j, "train_fraction", c.train_fraction);
  if (const auto it = j.find("preprocess"); it != j.end()) c.preprocess = preprocess_from_json(*it, c.preprocess);
  if (const auto it = j.find("variant"); it != j.end()) {
    std::string v;
    read_key(j, "variant", v);
    c.variant = preprocess::parse_variant(v);
  }
  if (const auto it = j.find("model"); it != j.end()) {
    if (it->is_string())
      c.model = zoo::default_spec(zoo::parse_model_kind(it->get<std::string>()));
    else
      c.model = zoo::ModelSpec::from_json(*it);
  }
  if (const auto it = j.find("train"); it != j.end()) c.train = train_from_json(*it, c.train);
  if (const auto it = j.find("grid"); it != j.end()) c.grid = grid_from_json(*it, c.grid);
  if (const auto it = j.find("weighting"); it != j.end()) {
    check_keys(*it, {"cap"}, "weighting");
    read_key(*it, "cap", c.weighting.cap);
  }
  if (const auto it = j.find("synthetic"); it != j.end()) c.synthetic = synthetic_from_json(*it, c.synthetic);
  if (const auto it = j.find("matrix"); it != j.end()) {
    check_keys(*it, {"models", "variants", "tiny_models", "epochs", "folds", "repeats"}, "matrix");
    std::vector<std::string> names;
    if (it->contains("models")) {
      read_key(*it, "models", names);
      c.matrix.models.clear();
      for (const auto& n : names) c.matrix.models.push_back(zoo::parse_model_kind(n));
    }
    if (it->contains("variants")) {
      names.clear();
      read_key(*it, "variants", names);
      c.matrix.variants.clear();
      for (const auto& n : names) c.matrix.variants.push_back(preprocess::parse_variant(n));
    }
    read_key(*it, "tiny_models", c.matrix.tiny_models);
    read_key(*it, "epochs", c.matrix.epochs);
    read_key(*it, "folds", c.matrix.folds);
    read_key(*it, "repeats", c.matrix.repeats);
  }
  read_key(j, "seed", c.seed);
  read_key(j, "threads", c.threads);
  return c;
}

RunConfig RunConfig::from_json(const Json& j) { return from_json(j, RunConfig{}); }

void RunConfig::finalize() {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    fail(ErrorCode::InvalidConfig, "train_fraction must lie in (0, 1)");
  if (threads == 0) fail(ErrorCode::InvalidConfig, "threads must be at least 1");
  train.seed = seed;
  train.threads = threads;
  synthetic.seed = seed;
  selection.validate();
  preprocess.validate();
  train.validate();
  grid.cells();
  if (weighting.cap != 0.0 && !(weighting.cap >= 1.0))
    fail(ErrorCode::InvalidConfig, "weighting.cap must be at least 1, or 0 to disable");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text, nullptr, true, true);
  } catch (const Json::exception& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

void apply_override(Json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    fail(ErrorCode::InvalidConfig, "override '" + std::string(assignment) + "' is not key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::exception&) {
    value = raw;
  }
  Json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorCode::InvalidConfig, "override key '" + key + "' has an empty component");
    if (!node->is_object()) fail(ErrorCode::InvalidConfig, "override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

}  // namespace fehforge
