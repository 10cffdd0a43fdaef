#include "fehforge/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fehforge/catalog.hpp"
#include "fehforge/config.hpp"
#include "fehforge/error.hpp"
#include "fehforge/evaluate.hpp"
#include "fehforge/preprocess.hpp"
#include "fehforge/rng.hpp"
#include "fehforge/synthetic.hpp"
#include "fehforge/table.hpp"
#include "fehforge/weighting.hpp"
#include "fehforge/zoo.hpp"

namespace fehforge::cli {
namespace {

namespace fs = std::filesystem;
using preprocess::FeatureSeries;
using preprocess::Variant;

// Flags shared by every command. Unset optionals leave the config file untouched.
struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> catalog, photometry, output, snapshot, input;
  std::optional<std::string> variant, model, delimiter;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::size_t> epochs, folds, repeats, batch_size, patience, stars;
  std::optional<double> lr;
  bool tiny = false;
  bool all_variants = false;
};

struct Context {
  std::string command;
  RunConfig cfg;
  // Whether the model came from the command line or config file; predict checks it.
  bool model_given = false;
  fs::path root;
  Json manifest_entries = Json::array();
  std::ostream* out = nullptr;
};

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("-c,--config", f.config, "JSON run configuration");
  cmd.add_option("--set", f.sets, "override a config key, e.g. train.max_epochs=50");
  cmd.add_option("--catalog", f.catalog, "catalog file");
  cmd.add_option("--photometry", f.photometry, "epoch photometry file");
  cmd.add_option("-o,--output", f.output, "output directory");
  cmd.add_option("--delimiter", f.delimiter, "input field delimiter (',' or 'tab')");
  cmd.add_option("--variant", f.variant, "RAW_PADDED, SPLINE_NO_MEAN, FULL or ALL");
  cmd.add_option("--model", f.model, "model kind, e.g. GRU or FCN");
  cmd.add_option("--seed", f.seed, "root random seed");
  cmd.add_option("--threads", f.threads, "worker threads (1 = bit-reproducible)");
  cmd.add_option("--epochs", f.epochs, "maximum training epochs");
  cmd.add_option("--folds", f.folds, "cross-validation folds");
  cmd.add_option("--repeats", f.repeats, "cross-validation repeats");
  cmd.add_option("--batch-size", f.batch_size, "mini-batch size");
  cmd.add_option("--lr", f.lr, "Adam learning rate");
  cmd.add_option("--patience", f.patience, "early-stopping patience in epochs");
}

Json merged_config(const Flags& f) {
  Json j = Json::object();
  if (!f.config.empty()) j = load_run_config(f.config).to_json();
  for (const auto& s : f.sets) apply_override(j, s);
  auto put = [&](const char* section, const char* key, const auto& value) {
    if (value) j[section][key] = *value;
  };
  put("paths", "catalog", f.catalog);
  put("paths", "photometry", f.photometry);
  put("paths", "output", f.output);
  put("paths", "snapshot", f.snapshot);
  put("paths", "input", f.input);
  put("train", "max_epochs", f.epochs);
  put("train", "folds", f.folds);
  put("train", "repeats", f.repeats);
  put("train", "batch_size", f.batch_size);
  put("train", "learning_rate", f.lr);
  put("train", "patience", f.patience);
  put("synthetic", "stars", f.stars);
  if (f.delimiter) j["delimiter"] = *f.delimiter;
  if (f.variant && !f.all_variants) j["variant"] = *f.variant;
  if (f.model) j["model"] = *f.model;
  if (f.seed) j["seed"] = *f.seed;
  if (f.threads) j["threads"] = *f.threads;
  if (f.tiny) j["matrix"]["tiny_models"] = true;
  return j;
}

Context make_context(const std::string& command, Flags& f, std::ostream& out) {
  if (f.variant) {
    std::string v = *f.variant;
    for (auto& ch : v) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    f.all_variants = v == "ALL";
    f.variant = v;
  }
  const Json j = merged_config(f);
  Context ctx;
  ctx.command = command;
  ctx.cfg = RunConfig::from_json(j);
  ctx.cfg.finalize();
  ctx.model_given = j.contains("model");
  ctx.out = &out;
  if (!ctx.cfg.paths.output.empty()) {
    ctx.root = ctx.cfg.paths.output;
  } else if (const char* env = std::getenv(kOutputEnv); env && *env) {
    ctx.root = env;
  } else {
    ctx.root = "feh-forge-out";
  }
  ctx.cfg.paths.output = ctx.root;
  return ctx;
}

void write(Context& ctx, const fs::path& relative, std::string_view contents) {
  const fs::path path = ctx.root / relative;
  fs::create_directories(path.parent_path());
  write_file_atomic(path, contents);
  ctx.manifest_entries.push_back(relative.generic_string());
}

// Every command leaves its resolved configuration and a file listing behind.
void finish(Context& ctx) {
  fs::create_directories(ctx.root);
  write_file_atomic(ctx.root / "config.snapshot", ctx.cfg.to_json().dump(2) + "\n");
  Json manifest = Json::object();
  const fs::path manifest_path = ctx.root / "manifest.json";
  if (fs::exists(manifest_path)) {
    try {
      manifest = Json::parse(read_file(manifest_path));
    } catch (const Json::exception&) {
      manifest = Json::object();
    }
  }
  manifest["format_version"] = 1;
  manifest["commands"][ctx.command] = {{"config_hash", hash_to_hex(fnv1a(ctx.cfg.to_json().dump()))},
                                       {"files", ctx.manifest_entries}};
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

std::vector<Variant> requested_variants(const Context& ctx, const Flags& f) {
  if (f.all_variants) return ctx.cfg.matrix.variants;
  return {ctx.cfg.variant};
}

// ------------------------------------------------------------------ ingest

struct Ingested {
  std::vector<catalog::StarRecord> records;
  catalog::SelectionResult selection;
  catalog::JoinResult join;
};

Ingested ingest(const RunConfig& cfg) {
  if (cfg.paths.catalog.empty()) fail(ErrorCode::MissingInput, "no catalog path given (--catalog)");
  if (cfg.paths.photometry.empty())
    fail(ErrorCode::MissingInput, "no photometry path given (--photometry)");
  Ingested in;
  catalog::CatalogFormat format;
  format.delimiter = cfg.delimiter;
  in.records = catalog::load_catalog(cfg.paths.catalog, format);
  in.selection = catalog::apply_selection(in.records, cfg.selection);
  const auto photometry = catalog::load_photometry(cfg.paths.photometry, cfg.delimiter);
  in.join = catalog::join_photometry(in.selection.accepted, photometry);
  return in;
}

std::string format_join_issues(const std::vector<catalog::JoinIssue>& issues) {
  std::ostringstream os;
  os << "source_id,issue,detail\n";
  for (const auto& i : issues) os << i.source_id << ',' << catalog::to_string(i.kind) << ',' << i.detail << '\n';
  return os.str();
}

int cmd_ingest(Context& ctx) {
  const Ingested in = ingest(ctx.cfg);
  std::vector<catalog::StarRecord> joined;
  std::vector<catalog::LightCurve> curves;
  for (const auto& [star, curve] : in.join.pairs) {
    joined.push_back(star);
    curves.push_back(curve);
  }
  write(ctx, "data/accepted_catalog.csv", catalog::format_catalog(joined));
  write(ctx, "data/accepted_photometry.csv", catalog::format_photometry(curves));
  write(ctx, "reports/rejections.csv", catalog::format_rejections(in.selection.rejected));
  write(ctx, "reports/join_issues.csv", format_join_issues(in.join.issues));
  auto& out = *ctx.out;
  out << "read " << in.records.size() << '\n';
  out << "accepted " << in.selection.accepted.size() << '\n';
  out << "rejected " << in.selection.rejected.size() << '\n';
  out << "joined " << in.join.pairs.size() << '\n';
  out << "join_issues " << in.join.issues.size() << '\n';
  return 0;
}

// -------------------------------------------------------------- preprocess

fs::path container_path(Variant v, std::string_view split) {
  return fs::path("data") / (std::string(preprocess::to_string(v)) + "." + std::string(split) + ".fehds");
}

std::vector<double> targets(const std::vector<FeatureSeries>& data) {
  std::vector<double> y;
  y.reserve(data.size());
  for (const auto& s : data) y.push_back(s.feh);
  return y;
}

int cmd_preprocess(Context& ctx, const Flags& flags) {
  const Ingested in = ingest(ctx.cfg);
  std::vector<catalog::StarRecord> joined;
  for (const auto& p : in.join.pairs) joined.push_back(p.first);
  const auto split = catalog::split_train_validation(joined, {ctx.cfg.train_fraction, ctx.cfg.seed});
  std::map<std::uint64_t, bool> in_train;
  for (const auto& r : split.train) in_train[r.source_id] = true;

  for (Variant v : requested_variants(ctx, flags)) {
    const auto dataset = preprocess::build_dataset(in.join.pairs, v, ctx.cfg.preprocess, ctx.cfg.threads);
    std::vector<FeatureSeries> train, validation;
    for (const auto& s : dataset.series) (in_train.count(s.source_id) ? train : validation).push_back(s);

    const std::string name(preprocess::to_string(v));
    write(ctx, container_path(v, "all"), preprocess::encode_container(dataset.series));
    write(ctx, container_path(v, "train"), preprocess::encode_container(train));
    write(ctx, container_path(v, "validation"), preprocess::encode_container(validation));
    write(ctx, fs::path("data") / (name + ".manifest.json"), dataset.manifest.to_json());

    // Weights are fitted on the training split only and evaluated on both halves.
    std::vector<FeatureSeries> both = train;
    both.insert(both.end(), validation.begin(), validation.end());
    if (train.size() >= 2) {
      const auto train_y = targets(train);
      const auto density = weighting::fit_density(train_y);
      const auto all_y = targets(both);
      const auto w = weighting::compute_weights(density, all_y, ctx.cfg.weighting);
      std::vector<std::uint64_t> ids;
      for (const auto& s : both) ids.push_back(s.source_id);
      write(ctx, fs::path("data") / (name + ".weights.csv"), weighting::format_weights(ids, all_y, w));
    }
    *ctx.out << name << ": series " << dataset.series.size() << " (train " << train.size()
             << ", validation " << validation.size() << "), failures " << dataset.manifest.failures.size()
             << ", length " << dataset.manifest.series_length << '\n';
  }
  return 0;
}

// ------------------------------------------------------------- training

std::vector<FeatureSeries> load_split(const Context& ctx, std::string_view split) {
  const fs::path path = ctx.root / container_path(ctx.cfg.variant, split);
  if (!fs::exists(path))
    fail(ErrorCode::MissingInput, path.string() + " not found; run `feh-forge preprocess` first");
  return preprocess::load_container(path);
}

zoo::ModelSpec spec_for(const Context& ctx, const std::vector<FeatureSeries>& data) {
  zoo::ModelSpec spec = ctx.cfg.model;
  if (!data.empty()) spec.input_length = static_cast<std::size_t>(data.front().length);
  return spec;
}

std::string stem(const Context& ctx, const zoo::ModelSpec& spec) {
  return std::string(zoo::to_string(spec.kind)) + "_" + std::string(preprocess::to_string(ctx.cfg.variant));
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void write_spec(Context& ctx, const zoo::ModelSpec& spec, const std::string& name) {
  write(ctx, fs::path("reports") / ("model_" + name + ".json"), spec.to_json().dump(2) + "\n");
}

int cmd_train(Context& ctx) {
  const auto train_set = load_split(ctx, "train");
  const auto validation_set = load_split(ctx, "validation");
  std::vector<FeatureSeries> data = train_set;
  data.insert(data.end(), validation_set.begin(), validation_set.end());
  const auto y = targets(data);
  const auto train_y = targets(train_set);
  const auto w = weighting::compute_weights(weighting::fit_density(train_y), y, ctx.cfg.weighting);

  std::vector<std::size_t> train_rows = iota(train_set.size());
  std::vector<std::size_t> val_rows;
  for (std::size_t i = train_set.size(); i < data.size(); ++i) val_rows.push_back(i);
  const std::vector<double> train_w(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(train_set.size()));
  const std::vector<double> val_w(w.begin() + static_cast<std::ptrdiff_t>(train_set.size()), w.end());

  const zoo::ModelSpec spec = spec_for(ctx, data);
  const std::string name = stem(ctx, spec);
  auto result = evaluate::train(spec, data, train_rows, train_w, val_rows, val_w, ctx.cfg.train,
                                derive_seed(ctx.cfg.seed, "holdout"));

  const auto pred_train = evaluate::predict(*result.network, train_set, ctx.cfg.train.batch_size);
  const auto pred_val = evaluate::predict(*result.network, validation_set, ctx.cfg.train.batch_size);

  evaluate::MetricsReport report;
  report.model = std::string(zoo::to_string(spec.kind));
  report.variant = std::string(preprocess::to_string(ctx.cfg.variant));
  evaluate::FoldReport fold;
  fold.train = evaluate::metric_suite(train_y, pred_train, train_w);
  fold.validation = evaluate::metric_suite(targets(validation_set), pred_val, val_w);
  fold.epochs_run = result.epochs_run;
  fold.best_epoch = result.best_epoch;
  fold.train_loss = result.train_loss;
  fold.validation_loss = result.validation_loss;
  report.folds.push_back(std::move(fold));

  const fs::path snap = fs::path("snapshots") / (name + ".fehsnap");
  fs::create_directories((ctx.root / snap).parent_path());
  zoo::save_snapshot(ctx.root / snap, zoo::Snapshot::capture(spec, *result.network));
  ctx.manifest_entries.push_back(snap.generic_string());

  write_spec(ctx, spec, name);
  write(ctx, fs::path("reports") / ("holdout_" + name + ".csv"), evaluate::format_report({report}));
  write(ctx, fs::path("reports") / ("holdout_" + name + ".txt"), evaluate::format_summary(report));
  write(ctx, fs::path("plots") / ("loss_holdout_" + name + ".csv"), evaluate::format_loss_curves(report));
  write(ctx, fs::path("plots") / ("predictions_holdout_" + name + "_training.csv"),
        evaluate::format_predictions(train_set, pred_train));
  write(ctx, fs::path("plots") / ("predictions_holdout_" + name + "_validation.csv"),
        evaluate::format_predictions(validation_set, pred_val));
  *ctx.out << evaluate::format_summary(report);
  *ctx.out << "snapshot " << (ctx.root / snap).string() << '\n';
  return 0;
}

evaluate::WeightPolicy weight_policy(const Context& ctx) {
  evaluate::WeightPolicy policy;
  policy.config = ctx.cfg.weighting;
  return policy;
}

void write_cv(Context& ctx, const evaluate::MetricsReport& report, const std::string& prefix,
              const std::string& name) {
  write(ctx, fs::path("reports") / (prefix + name + ".csv"), evaluate::format_report({report}));
  write(ctx, fs::path("reports") / (prefix + name + "_folds.csv"), evaluate::format_fold_table(report));
  write(ctx, fs::path("reports") / (prefix + name + ".txt"), evaluate::format_summary(report));
  write(ctx, fs::path("plots") / ("loss_" + prefix + name + ".csv"), evaluate::format_loss_curves(report));
}

// Index of the fold with the lowest validation wRMSE.
std::size_t best_fold(const evaluate::MetricsReport& report) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < report.folds.size(); ++i)
    if (report.folds[i].validation.wrmse < report.folds[best].validation.wrmse) best = i;
  return best;
}

int cmd_cv(Context& ctx) {
  const auto data = load_split(ctx, "train");
  const zoo::ModelSpec spec = spec_for(ctx, data);
  const std::string name = stem(ctx, spec);
  std::vector<zoo::Snapshot> snapshots;
  const auto report = evaluate::cross_validate(spec, data, weight_policy(ctx), ctx.cfg.train, &snapshots);

  const std::size_t best = best_fold(report);
  const fs::path snap = fs::path("snapshots") / ("cv_best_" + name + ".fehsnap");
  fs::create_directories((ctx.root / snap).parent_path());
  zoo::save_snapshot(ctx.root / snap, snapshots[best]);
  ctx.manifest_entries.push_back(snap.generic_string());

  write_spec(ctx, spec, name);
  write_cv(ctx, report, "cv_", name);
  *ctx.out << evaluate::format_summary(report);
  *ctx.out << "best fold: repeat " << report.folds[best].repeat << " fold " << report.folds[best].fold << '\n';
  return 0;
}

int cmd_gridsearch(Context& ctx) {
  const auto data = load_split(ctx, "train");
  const zoo::ModelSpec spec = spec_for(ctx, data);
  const std::string name = stem(ctx, spec);
  const auto results = evaluate::grid_search(spec, data, ctx.cfg.grid, weight_policy(ctx), ctx.cfg.train);
  write_spec(ctx, spec, name);
  write(ctx, fs::path("reports") / ("grid_" + name + ".csv"), evaluate::format_grid(results));

  std::vector<evaluate::MetricsReport> reports;
  for (const auto& r : results)
    if (r.report) reports.push_back(*r.report);
  if (reports.empty()) fail(ErrorCode::DivergedLoss, "every grid cell failed; see " + name + " grid table");

  // Rerun the winner to keep its fold models; ranking is deterministic so this
  // reproduces the winning report exactly.
  const auto& winner = results.front();
  zoo::ModelSpec best_spec = spec;
  zoo::set_dropout(best_spec, winner.cell.dropout);
  evaluate::TrainConfig best_cfg = ctx.cfg.train;
  best_cfg.learning_rate = winner.cell.learning_rate;
  best_cfg.batch_size = winner.cell.batch_size;
  std::vector<zoo::Snapshot> snapshots;
  const auto report = evaluate::cross_validate(best_spec, data, weight_policy(ctx), best_cfg, &snapshots);
  const fs::path snap = fs::path("snapshots") / ("grid_best_" + name + ".fehsnap");
  fs::create_directories((ctx.root / snap).parent_path());
  zoo::save_snapshot(ctx.root / snap, snapshots[best_fold(report)]);
  ctx.manifest_entries.push_back(snap.generic_string());
  write_cv(ctx, report, "grid_best_", name);

  *ctx.out << "cells " << results.size() << ", best " << winner.cell.label() << " validation wRMSE "
           << format_double(winner.validation_wrmse) << '\n';
  return 0;
}

int cmd_predict(Context& ctx, const std::optional<std::string>& out_path) {
  if (ctx.cfg.paths.snapshot.empty()) fail(ErrorCode::MissingInput, "no snapshot given (--snapshot)");
  if (ctx.cfg.paths.input.empty()) fail(ErrorCode::MissingInput, "no input container given (--input)");
  const auto data = preprocess::load_container(ctx.cfg.paths.input);
  zoo::ModelSpec expected = spec_for(ctx, data);
  const auto snapshot = zoo::load_snapshot(ctx.cfg.paths.snapshot, nullptr);
  if (ctx.model_given) {
    // Only the architecture is pinned; the recorded length follows the training data.
    expected.input_length = snapshot.spec.input_length;
    if (expected.hash() != snapshot.spec.hash())
      fail(ErrorCode::IntegrityError, "snapshot " + ctx.cfg.paths.snapshot.string() + " was built for spec " +
                                          hash_to_hex(snapshot.spec.hash()) + ", expected " +
                                          hash_to_hex(expected.hash()));
  }
  auto network = snapshot.restore();
  const auto predicted = evaluate::predict(*network, data, ctx.cfg.train.batch_size);
  const std::string text = evaluate::format_predictions(data, predicted);
  if (out_path) {
    const fs::path p = *out_path;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_file_atomic(p, text);
  } else {
    write(ctx, fs::path("reports") / ("predictions_" + ctx.cfg.paths.snapshot.stem().string() + "_" +
                                      ctx.cfg.paths.input.stem().string() + ".csv"),
          text);
  }
  *ctx.out << "predictions " << predicted.size() << '\n';
  return 0;
}

// ---------------------------------------------------------------- matrix

int cmd_matrix(Context& ctx) {
  const Ingested in = ingest(ctx.cfg);
  std::vector<catalog::StarRecord> joined;
  for (const auto& p : in.join.pairs) joined.push_back(p.first);
  const auto split = catalog::split_train_validation(joined, {ctx.cfg.train_fraction, ctx.cfg.seed});
  std::map<std::uint64_t, bool> in_train;
  for (const auto& r : split.train) in_train[r.source_id] = true;

  const auto& m = ctx.cfg.matrix;
  evaluate::TrainConfig tc = ctx.cfg.train;
  if (m.epochs) tc.max_epochs = m.epochs;
  if (m.folds) tc.folds = m.folds;
  if (m.repeats) tc.repeats = m.repeats;

  std::vector<std::string> variant_names, model_names;
  for (Variant v : m.variants) variant_names.emplace_back(preprocess::to_string(v));
  for (zoo::ModelKind k : m.models) model_names.emplace_back(zoo::to_string(k));

  std::vector<evaluate::MetricsReport> reports;
  std::ostringstream failures;
  failures << "model,variant,error\n";
  std::size_t failed = 0;
  for (Variant v : m.variants) {
    const auto dataset = preprocess::build_dataset(in.join.pairs, v, ctx.cfg.preprocess, ctx.cfg.threads);
    std::vector<FeatureSeries> train;
    for (const auto& s : dataset.series)
      if (in_train.count(s.source_id)) train.push_back(s);
    for (zoo::ModelKind k : m.models) {
      zoo::ModelSpec spec = m.tiny_models ? zoo::tiny_spec(k) : zoo::default_spec(k);
      if (!train.empty()) spec.input_length = static_cast<std::size_t>(train.front().length);
      const std::string label = std::string(zoo::to_string(k)) + "/" + std::string(preprocess::to_string(v));
      try {
        reports.push_back(evaluate::cross_validate(spec, train, weight_policy(ctx), tc));
        *ctx.out << label << ": validation wRMSE "
                 << format_double(reports.back().summary("validation", "wrmse").mean) << '\n';
      } catch (const Error& e) {
        ++failed;
        failures << zoo::to_string(k) << ',' << preprocess::to_string(v) << ",\"" << e.what() << "\"\n";
        *ctx.out << label << ": failed: " << e.what() << '\n';
      }
    }
  }
  write(ctx, "reports/metric_matrix.csv", evaluate::format_metric_matrix(reports, variant_names, model_names));
  write(ctx, "reports/matrix_long.csv", evaluate::format_report(reports));
  write(ctx, "reports/matrix_failures.csv", failures.str());
  *ctx.out << "cells " << reports.size() << " of " << variant_names.size() * model_names.size() << ", failed "
           << failed << '\n';
  return 0;
}

// ----------------------------------------------------------------- synth

int cmd_synth(Context& ctx) {
  const auto corpus = synthetic::generate(ctx.cfg.synthetic);
  const fs::path catalog_path =
      ctx.cfg.paths.catalog.empty() ? ctx.root / "data" / "synthetic_catalog.csv" : ctx.cfg.paths.catalog;
  const fs::path photometry_path =
      ctx.cfg.paths.photometry.empty() ? ctx.root / "data" / "synthetic_photometry.csv" : ctx.cfg.paths.photometry;
  for (const auto& p : {catalog_path, photometry_path})
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(catalog_path, catalog::format_catalog(corpus.catalog));
  write_file_atomic(photometry_path, catalog::format_photometry(corpus.curves));
  ctx.manifest_entries.push_back(catalog_path.generic_string());
  ctx.manifest_entries.push_back(photometry_path.generic_string());
  ctx.cfg.paths.catalog = catalog_path;
  ctx.cfg.paths.photometry = photometry_path;
  *ctx.out << "stars " << corpus.catalog.size() << '\n';
  *ctx.out << "catalog " << catalog_path.string() << '\n';
  *ctx.out << "photometry " << photometry_path.string() << '\n';
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"RR Lyrae photometric metallicity pipeline", "feh-forge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "feh-forge 1.0");

  Flags flags;
  std::optional<std::string> predictions_out;
  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"ingest", "apply selection cuts and join photometry"},
      {"preprocess", "fold, align and resample light curves into dataset containers"},
      {"train", "train on the training split, evaluate on the validation split"},
      {"cv", "repeated stratified k-fold cross-validation on the training split"},
      {"gridsearch", "cross-validate every dropout x learning-rate x batch-size cell"},
      {"predict", "apply a snapshot to a dataset container"},
      {"matrix", "cross-validate every model on every dataset variant"},
      {"synth", "write a synthetic catalog and photometry"},
  };
  for (const auto& c : commands) {
    CLI::App* cmd = app.add_subcommand(c.name, c.help);
    add_common(*cmd, flags);
    if (std::string_view(c.name) == "predict") {
      cmd->add_option("--snapshot", flags.snapshot, "snapshot file");
      cmd->add_option("--input", flags.input, "dataset container");
      cmd->add_option("--out", predictions_out, "predictions file (default under reports/)");
    }
    if (std::string_view(c.name) == "synth") cmd->add_option("--stars", flags.stars, "number of stars");
    if (std::string_view(c.name) == "matrix") cmd->add_flag("--tiny", flags.tiny, "use reduced-size models");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Context ctx = make_context(command, flags, out);
    int code = 0;
    if (command == "ingest") code = cmd_ingest(ctx);
    else if (command == "preprocess") code = cmd_preprocess(ctx, flags);
    else if (command == "train") code = cmd_train(ctx);
    else if (command == "cv") code = cmd_cv(ctx);
    else if (command == "gridsearch") code = cmd_gridsearch(ctx);
    else if (command == "predict") code = cmd_predict(ctx, predictions_out);
    else if (command == "matrix") code = cmd_matrix(ctx);
    else if (command == "synth") code = cmd_synth(ctx);
    finish(ctx);
    return code;
  } catch (const Error& e) {
    err << "feh-forge " << command << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "feh-forge " << command << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace fehforge::cli
