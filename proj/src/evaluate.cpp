#include "fehforge/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "fehforge/error.hpp"
#include "fehforge/optim.hpp"
#include "fehforge/rng.hpp"
#include "fehforge/table.hpp"

namespace fehforge::evaluate {

namespace {

void same_length(std::size_t a, std::size_t b, const char* who) {
  if (a != b) fail(ErrorCode::ShapeMismatch, std::string(who) + ": input lengths differ");
}

std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(values[r]);
  return out;
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

// --------------------------------------------------------------------- metrics

double r2(std::span<const double> y, std::span<const double> y_hat) {
  same_length(y.size(), y_hat.size(), "r2");
  if (y.empty()) fail(ErrorCode::ZeroVariance, "r2 of an empty sample");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (!(ss_tot > 0.0)) fail(ErrorCode::ZeroVariance, "r2 is undefined: all targets are equal");
  return 1.0 - ss_res / ss_tot;
}

Metrics metric_suite(std::span<const double> y, std::span<const double> y_hat, std::span<const double> w) {
  same_length(y.size(), y_hat.size(), "metric_suite");
  same_length(y.size(), w.size(), "metric_suite");
  double se = 0.0, ae = 0.0, wse = 0.0, wae = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y_hat[i] - y[i];
    se += e * e;
    ae += std::abs(e);
    wse += w[i] * e * e;
    wae += w[i] * std::abs(e);
    wsum += w[i];
  }
  if (!(wsum > 0.0)) fail(ErrorCode::NonPositiveWeightSum, "metric weights sum to a non-positive value");
  const double n = static_cast<double>(y.size());
  Metrics m;
  m.r2 = r2(y, y_hat);
  m.rmse = std::sqrt(se / n);
  m.mae = ae / n;
  m.wrmse = std::sqrt(wse / wsum);
  m.wmae = wae / wsum;
  return m;
}

double metric_value(const Metrics& m, std::string_view name) {
  if (name == "r2") return m.r2;
  if (name == "rmse") return m.rmse;
  if (name == "mae") return m.mae;
  if (name == "wrmse") return m.wrmse;
  if (name == "wmae") return m.wmae;
  fail(ErrorCode::InvalidConfig, "unknown metric '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------- config

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::InvalidConfig, std::string("train: ") + what);
  };
  require(batch_size >= 1, "batch_size must be at least 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(max_epochs >= 1, "max_epochs must be at least 1");
  require(folds >= 2, "folds must be at least 2");
  require(repeats >= 1, "repeats must be at least 1");
  require(stratification_bins >= 2, "stratification_bins must be at least 2");
  require(threads >= 1, "threads must be at least 1");
  require(divergence_factor > 1.0, "divergence_factor must exceed 1");
}

std::string GridCell::label() const {
  return "dropout=" + format_double(dropout) + ",lr=" + format_double(learning_rate) +
         ",batch=" + std::to_string(batch_size);
}

std::vector<GridCell> GridSpec::cells() const {
  if (dropout_rates.empty() || learning_rates.empty() || batch_sizes.empty())
    fail(ErrorCode::InvalidConfig, "grid axes must be non-empty");
  std::vector<GridCell> out;
  for (double d : dropout_rates)
    for (double lr : learning_rates)
      for (std::size_t b : batch_sizes) out.push_back({d, lr, b});
  return out;
}

// ----------------------------------------------------------------------- folds

std::vector<std::size_t> quantile_bins(std::span<const double> targets, std::size_t bins) {
  const std::size_t n = targets.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });
  std::vector<std::size_t> bin(n);
  for (std::size_t rank = 0; rank < n; ++rank) bin[order[rank]] = rank * bins / n;
  return bin;
}

std::vector<FoldAssignment> stratified_kfold(std::span<const double> targets, std::size_t k,
                                             std::size_t bins, std::size_t repeats, std::uint64_t seed) {
  const std::size_t n = targets.size();
  if (k < 2) fail(ErrorCode::InvalidConfig, "k-fold needs k >= 2");
  if (bins < 1) fail(ErrorCode::InvalidConfig, "stratification needs at least one bin");
  if (n < k) fail(ErrorCode::TooFewSamples, std::to_string(n) + " samples cannot fill " + std::to_string(k) + " folds");
  const auto bin = quantile_bins(targets, bins);
  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t i = 0; i < n; ++i) members[bin[i]].push_back(i);

  std::vector<FoldAssignment> out;
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, "fold", r));
    std::vector<std::size_t> fold_of(n);
    std::size_t dealer = 0;
    for (auto group : members) {
      rng.shuffle(group.begin(), group.end());
      for (std::size_t i : group) fold_of[i] = dealer++ % k;
    }
    for (std::size_t f = 0; f < k; ++f) {
      FoldAssignment a{r, f, {}, {}};
      for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? a.validation : a.train).push_back(i);
      out.push_back(std::move(a));
    }
  }
  return out;
}

// -------------------------------------------------------------------- training

Batch make_batch(const std::vector<FeatureSeries>& data, std::span<const std::size_t> rows) {
  if (rows.empty()) fail(ErrorCode::ShapeMismatch, "empty batch");
  const std::size_t len = static_cast<std::size_t>(data[rows[0]].length);
  const std::size_t channels = 2;
  Batch b{nn::Tensor({rows.size(), len, channels}), {}, {}};
  bool any_masked = false;
  for (std::size_t r : rows) {
    if (static_cast<std::size_t>(data[r].length) != len)
      fail(ErrorCode::ShapeMismatch, "series in a batch differ in length");
    any_masked = any_masked || std::find(data[r].mask.begin(), data[r].mask.end(), 0) != data[r].mask.end();
  }
  if (any_masked) b.mask.resize(rows.size() * len);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const FeatureSeries& s = data[rows[i]];
    std::copy(s.values.begin(), s.values.end(), b.x.data.begin() + i * len * channels);
    if (any_masked) std::copy(s.mask.begin(), s.mask.end(), b.mask.begin() + i * len);
    b.y.push_back(s.feh);
  }
  return b;
}

std::vector<double> predict(nn::Network& network, const std::vector<FeatureSeries>& data,
                            std::size_t batch_size) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t end = std::min(rows.size(), start + batch_size);
    const Batch b = make_batch(data, std::span(rows).subspan(start, end - start));
    const auto y = network.predict(b.x, b.mask);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

namespace {

std::vector<double> predict_rows(nn::Network& net, const std::vector<FeatureSeries>& data,
                                 std::span<const std::size_t> rows, std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t end = std::min(rows.size(), start + batch_size);
    const Batch b = make_batch(data, rows.subspan(start, end - start));
    const auto y = net.predict(b.x, b.mask);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

}  // namespace

TrainResult train(const zoo::ModelSpec& spec, const std::vector<FeatureSeries>& data,
                  std::span<const std::size_t> train_rows, std::span<const double> train_weights,
                  std::span<const std::size_t> validation_rows, std::span<const double> validation_weights,
                  const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  same_length(train_rows.size(), train_weights.size(), "train");
  same_length(validation_rows.size(), validation_weights.size(), "train");
  if (train_rows.empty()) fail(ErrorCode::TooFewSamples, "no training rows");

  TrainResult result;
  result.network = zoo::instantiate(spec, derive_seed(seed, "init"));
  nn::Network& net = *result.network;
  const auto params = net.parameters();
  nn::Adam adam(params, nn::AdamConfig{config.learning_rate});

  const std::vector<double> val_targets = [&] {
    std::vector<double> t;
    for (std::size_t r : validation_rows) t.push_back(data[r].feh);
    return t;
  }();

  std::vector<std::size_t> order(train_rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> rows;
  std::vector<double> w, grad;
  std::optional<double> reference_loss;
  double best = std::numeric_limits<double>::infinity();
  std::vector<nn::Tensor> checkpoint = net.values();
  std::size_t bad_epochs = 0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "shuffle", epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_acc = 0.0, weight_acc = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      rows.clear();
      w.clear();
      for (std::size_t i = start; i < end; ++i) {
        rows.push_back(train_rows[order[i]]);
        w.push_back(train_weights[order[i]]);
      }
      const Batch b = make_batch(data, rows);
      net.zero_grad();
      const nn::Tensor y = net.forward(b.x, b.mask, nn::RunContext{true, derive_seed(seed, "dropout", step++)});
      const double loss = nn::weighted_mse(y.data, b.y, w, &grad);
      nn::Tensor dy({rows.size(), 1});
      dy.data = grad;
      net.backward(dy);
      const double total = loss + nn::regularization_penalty(params, true);
      if (!reference_loss) reference_loss = std::max(total, 1e-12);
      if (!std::isfinite(total) || total > config.divergence_factor * *reference_loss)
        fail(ErrorCode::DivergedLoss, "epoch " + std::to_string(epoch) + ", batch starting at " +
                                          std::to_string(start) + ": loss " + format_double(total) +
                                          " (first batch " + format_double(*reference_loss) + ")");
      adam.step();
      const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
      loss_acc += loss * wsum;
      weight_acc += wsum;
    }
    const double train_loss = loss_acc / weight_acc;
    result.train_loss.push_back(train_loss);

    double monitor = train_loss;
    if (!validation_rows.empty()) {
      const auto pred = predict_rows(net, data, validation_rows, std::max<std::size_t>(config.batch_size, 256));
      monitor = nn::weighted_mse(pred, val_targets, validation_weights);
      if (!std::isfinite(monitor))
        fail(ErrorCode::DivergedLoss, "epoch " + std::to_string(epoch) + ": validation loss is not finite");
    }
    result.validation_loss.push_back(monitor);
    result.epochs_run = epoch;
    if (monitor < best) {
      best = monitor;
      result.best_epoch = epoch;
      checkpoint = net.values();
      bad_epochs = 0;
    } else if (++bad_epochs > config.patience) {
      break;
    }
  }
  net.set_values(checkpoint);
  return result;
}

// ------------------------------------------------------------------- reporting

Summary summarize(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

Summary MetricsReport::summary(std::string_view phase, std::string_view metric) const {
  if (phase != "training" && phase != "validation")
    fail(ErrorCode::InvalidConfig, "phase must be 'training' or 'validation'");
  std::vector<double> v;
  for (const auto& f : folds) v.push_back(metric_value(phase == "training" ? f.train : f.validation, metric));
  return summarize(v);
}

std::string format_report(const std::vector<MetricsReport>& reports) {
  std::string out = "model,variant,phase,metric,mean,std\n";
  for (const auto& r : reports)
    for (const char* phase : {"training", "validation"})
      for (auto metric : kMetricNames) {
        const Summary s = r.summary(phase, metric);
        out += r.model + "," + r.variant + "," + phase + "," + std::string(metric) + "," +
               format_double(s.mean) + "," + format_double(s.std) + "\n";
      }
  return out;
}

std::string format_fold_table(const MetricsReport& report) {
  std::string out = "model,variant,repeat,fold,phase,metric,value,epochs_run,best_epoch\n";
  for (const auto& f : report.folds)
    for (const char* phase : {"training", "validation"})
      for (auto metric : kMetricNames)
        out += report.model + "," + report.variant + "," + std::to_string(f.repeat) + "," +
               std::to_string(f.fold) + "," + phase + "," + std::string(metric) + "," +
               format_double(metric_value(std::string_view(phase) == "training" ? f.train : f.validation, metric)) +
               "," + std::to_string(f.epochs_run) + "," + std::to_string(f.best_epoch) + "\n";
  return out;
}

std::string format_loss_curves(const MetricsReport& report) {
  std::string out = "repeat,fold,epoch,train_loss,validation_loss\n";
  for (const auto& f : report.folds)
    for (std::size_t e = 0; e < f.train_loss.size(); ++e)
      out += std::to_string(f.repeat) + "," + std::to_string(f.fold) + "," + std::to_string(e + 1) + "," +
             format_double(f.train_loss[e]) + "," + format_double(f.validation_loss[e]) + "\n";
  return out;
}

std::string format_predictions(const std::vector<FeatureSeries>& data, std::span<const double> predicted) {
  same_length(data.size(), predicted.size(), "format_predictions");
  std::string out = "source_id,predicted_feh,true_feh\n";
  for (std::size_t i = 0; i < data.size(); ++i)
    out += std::to_string(data[i].source_id) + "," + format_double(predicted[i]) + "," +
           (std::isnan(data[i].feh) ? std::string() : format_double(data[i].feh)) + "\n";
  return out;
}

std::string format_summary(const MetricsReport& report) {
  std::string out = report.model + " on " + report.variant + " (" + std::to_string(report.folds.size()) +
                    " folds)\n";
  char line[160];
  std::snprintf(line, sizeof line, "  %-6s %22s %22s\n", "metric", "training", "validation");
  out += line;
  for (auto metric : kMetricNames) {
    const Summary t = report.summary("training", metric), v = report.summary("validation", metric);
    std::snprintf(line, sizeof line, "  %-6s %10.4f +- %-8.4f %10.4f +- %-8.4f\n", std::string(metric).c_str(),
                  t.mean, t.std, v.mean, v.std);
    out += line;
  }
  return out;
}

std::string format_metric_matrix(const std::vector<MetricsReport>& reports,
                                 std::span<const std::string> variants, std::span<const std::string> models) {
  std::string out = "variant,metric";
  for (const auto& m : models) out += "," + m + " training," + m + " validation";
  out += "\n";
  for (const auto& variant : variants)
    for (auto metric : kMetricNames) {
      out += variant + "," + std::string(metric);
      for (const auto& model : models) {
        const auto it = std::find_if(reports.begin(), reports.end(), [&](const MetricsReport& r) {
          return r.model == model && r.variant == variant && !r.folds.empty();
        });
        for (const char* phase : {"training", "validation"}) {
          if (it == reports.end()) {
            out += ",NA";
            continue;
          }
          const Summary s = it->summary(phase, metric);
          out += "," + fixed4(s.mean) + "±" + fixed4(s.std);
        }
      }
      out += "\n";
    }
  return out;
}

// ------------------------------------------------------------ cross-validation

void parallel_for(std::size_t jobs, unsigned threads, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(jobs);
  auto run = [&](std::size_t i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), jobs));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs; i = next++) run(i);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

MetricsReport cross_validate(const zoo::ModelSpec& spec, const std::vector<FeatureSeries>& data,
                             const WeightPolicy& weights, const TrainConfig& config,
                             std::vector<zoo::Snapshot>* snapshots) {
  config.validate();
  if (weights.fixed) same_length(weights.fixed->size(), data.size(), "cross_validate weights");
  std::vector<double> targets;
  for (const auto& s : data) targets.push_back(s.feh);
  const auto folds = stratified_kfold(targets, config.folds, config.stratification_bins, config.repeats, config.seed);

  MetricsReport report;
  report.model = std::string(zoo::to_string(spec.kind));
  report.variant = data.empty() ? "" : std::string(preprocess::to_string(data.front().variant));
  report.folds.resize(folds.size());
  if (snapshots) snapshots->assign(folds.size(), zoo::Snapshot{spec, {}});

  parallel_for(folds.size(), config.threads, [&](std::size_t i) {
    const FoldAssignment& a = folds[i];
    try {
      std::vector<double> w_train, w_val;
      const auto t_train = gather(targets, a.train), t_val = gather(targets, a.validation);
      if (weights.fixed) {
        w_train = gather(*weights.fixed, a.train);
        w_val = gather(*weights.fixed, a.validation);
      } else {
        const auto density = weighting::fit_density(t_train);
        w_train = weighting::compute_weights(density, t_train, weights.config);
        w_val = weighting::compute_weights(density, t_val, weights.config);
      }
      TrainResult tr = train(spec, data, a.train, w_train, a.validation, w_val, config,
                             derive_seed(config.seed, "train", i));
      const auto p_train = predict_rows(*tr.network, data, a.train, 256);
      const auto p_val = predict_rows(*tr.network, data, a.validation, 256);
      FoldReport& f = report.folds[i];
      f.repeat = a.repeat;
      f.fold = a.fold;
      f.train = metric_suite(t_train, p_train, w_train);
      f.validation = metric_suite(t_val, p_val, w_val);
      f.epochs_run = tr.epochs_run;
      f.best_epoch = tr.best_epoch;
      f.train_loss = std::move(tr.train_loss);
      f.validation_loss = std::move(tr.validation_loss);
      if (snapshots) (*snapshots)[i] = zoo::Snapshot::capture(spec, *tr.network);
    } catch (const Error& e) {
      throw Error(e.code(), "repeat " + std::to_string(a.repeat) + " fold " + std::to_string(a.fold) + ": " + e.what());
    }
  });
  return report;
}

std::vector<GridResult> grid_search(const zoo::ModelSpec& base, const std::vector<FeatureSeries>& data,
                                    const GridSpec& grid, const WeightPolicy& weights,
                                    const TrainConfig& config, const CellHook& hook) {
  const auto cells = grid.cells();
  std::vector<GridResult> results(cells.size());
  // Parallelism goes to cells; each cell's folds then run sequentially.
  const unsigned cell_threads = config.threads;
  parallel_for(cells.size(), cell_threads, [&](std::size_t i) {
    GridResult& r = results[i];
    r.cell = cells[i];
    zoo::ModelSpec spec = base;
    zoo::set_dropout(spec, cells[i].dropout);
    TrainConfig cfg = config;
    cfg.learning_rate = cells[i].learning_rate;
    cfg.batch_size = cells[i].batch_size;
    if (cells.size() > 1) cfg.threads = 1;
    try {
      if (hook) hook(cells[i], spec, cfg);
      r.report = cross_validate(spec, data, weights, cfg);
      r.validation_wrmse = r.report->summary("validation", "wrmse").mean;
      r.validation_mae = r.report->summary("validation", "mae").mean;
    } catch (const std::exception& e) {
      r.report.reset();
      r.error = e.what();
    }
  });
  std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    if (a.report.has_value() != b.report.has_value()) return a.report.has_value();
    if (!a.report) return a.cell.label() < b.cell.label();
    if (a.validation_wrmse != b.validation_wrmse) return a.validation_wrmse < b.validation_wrmse;
    if (a.validation_mae != b.validation_mae) return a.validation_mae < b.validation_mae;
    return a.cell.label() < b.cell.label();
  });
  return results;
}

std::string format_grid(const std::vector<GridResult>& results) {
  std::string out = "rank,dropout,learning_rate,batch_size,validation_wrmse,validation_mae,error\n";
  std::size_t rank = 0;
  for (const auto& r : results) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    out += (r.report ? std::to_string(++rank) : std::string()) + "," + format_double(r.cell.dropout) + "," +
           format_double(r.cell.learning_rate) + "," + std::to_string(r.cell.batch_size) + "," +
           (r.report ? format_double(r.validation_wrmse) : std::string()) + "," +
           (r.report ? format_double(r.validation_mae) : std::string()) + "," + error + "\n";
  }
  return out;
}

}  // namespace fehforge::evaluate
