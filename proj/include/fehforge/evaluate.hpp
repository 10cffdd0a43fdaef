#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fehforge/network.hpp"
#include "fehforge/preprocess.hpp"
#include "fehforge/weighting.hpp"
#include "fehforge/zoo.hpp"

namespace fehforge::evaluate {

using preprocess::FeatureSeries;

/// 1 - SS_res / SS_tot. Throws ZeroVariance when every y is equal.
double r2(std::span<const double> y, std::span<const double> y_hat);

struct Metrics {
  double r2 = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double wrmse = 0.0;
  double wmae = 0.0;
};

/// Throws NonPositiveWeightSum, ZeroVariance, ShapeMismatch.
Metrics metric_suite(std::span<const double> y, std::span<const double> y_hat, std::span<const double> w);

/// Row order of the metric matrix.
inline constexpr std::string_view kMetricNames[] = {"r2", "wrmse", "wmae", "rmse", "mae"};
double metric_value(const Metrics& m, std::string_view name);

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  std::size_t folds = 5;
  std::size_t repeats = 3;
  std::size_t stratification_bins = 10;
  std::uint64_t seed = 0;
  /// Worker threads for independent folds / grid cells; 1 is bit-reproducible.
  unsigned threads = 1;
  /// A mini-batch loss above this multiple of the first batch's loss counts as divergence.
  double divergence_factor = 1e4;

  void validate() const;
};

struct GridCell {
  double dropout = 0.0;
  double learning_rate = 0.0;
  std::size_t batch_size = 0;

  std::string label() const;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridSpec {
  std::vector<double> dropout_rates{0.1, 0.2, 0.4, 0.6};
  std::vector<double> learning_rates{0.001, 0.01, 0.1};
  std::vector<std::size_t> batch_sizes{32, 64, 128, 256, 512};

  /// Cartesian product, dropout outermost, batch size innermost.
  std::vector<GridCell> cells() const;
};

// ------------------------------------------------------------------------ folds

/// Equal-count quantile classes of the targets (ties are split by index order).
std::vector<std::size_t> quantile_bins(std::span<const double> targets, std::size_t bins);

struct FoldAssignment {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::vector<std::size_t> train;       // ascending
  std::vector<std::size_t> validation;  // ascending
};

/// Repeated stratified k-fold over quantile bins. Within each bin the members are
/// shuffled and dealt round-robin, the dealer position carrying over between bins, so
/// per-fold bin counts differ by at most one and fold sizes by at most one.
/// Throws TooFewSamples when N < k.
std::vector<FoldAssignment> stratified_kfold(std::span<const double> targets, std::size_t k,
                                             std::size_t bins, std::size_t repeats, std::uint64_t seed);

// --------------------------------------------------------------------- training

struct Batch {
  nn::Tensor x;
  nn::Mask mask;  // empty when every step is valid
  std::vector<double> y;
};

/// Stacks the selected series; all must share one length.
Batch make_batch(const std::vector<FeatureSeries>& data, std::span<const std::size_t> rows);

struct TrainResult {
  std::unique_ptr<nn::Network> network;  // best-validation parameters
  std::vector<double> train_loss;        // per epoch, weighted MSE over mini-batches
  std::vector<double> validation_loss;   // per epoch, weighted MSE
  std::size_t best_epoch = 0;            // 1-based
  std::size_t epochs_run = 0;
};

/// Adam on weighted MSE plus regularisation. After every epoch the validation weighted
/// MSE is measured (the training loss when `validation` is empty); training stops once
/// it fails to improve for more than `patience` epochs and the best parameters are
/// restored. Throws DivergedLoss on a non-finite or exploding mini-batch loss.
TrainResult train(const zoo::ModelSpec& spec, const std::vector<FeatureSeries>& data,
                  std::span<const std::size_t> train_rows, std::span<const double> train_weights,
                  std::span<const std::size_t> validation_rows, std::span<const double> validation_weights,
                  const TrainConfig& config, std::uint64_t seed);

/// Inference-mode predictions in input order.
std::vector<double> predict(nn::Network& network, const std::vector<FeatureSeries>& data,
                            std::size_t batch_size = 256);

// ------------------------------------------------------------------- reporting

struct FoldReport {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  Metrics train;
  Metrics validation;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over folds x repeats
};

Summary summarize(std::span<const double> values);

struct MetricsReport {
  std::string model;
  std::string variant;
  std::vector<FoldReport> folds;

  /// phase is "training" or "validation".
  Summary summary(std::string_view phase, std::string_view metric) const;
};

/// Long table: model,variant,phase,metric,mean,std.
std::string format_report(const std::vector<MetricsReport>& reports);
/// Per-fold table: model,variant,repeat,fold,phase,metric,value,epochs_run,best_epoch.
std::string format_fold_table(const MetricsReport& report);
/// repeat,fold,epoch,train_loss,validation_loss.
std::string format_loss_curves(const MetricsReport& report);
/// source_id,predicted_feh,true_feh (truth empty when unknown).
std::string format_predictions(const std::vector<FeatureSeries>& data, std::span<const double> predicted);
/// Human-readable summary.
std::string format_summary(const MetricsReport& report);

/// Wide matrix: one block per variant, rows r2/wrmse/wmae/rmse/mae, two columns
/// (training, validation) per model; cells "mean±std" or "NA" when a model/variant
/// pair has no report.
std::string format_metric_matrix(const std::vector<MetricsReport>& reports,
                                 std::span<const std::string> variants, std::span<const std::string> models);

// ------------------------------------------------------------ cross-validation

/// How per-fold sample weights are produced.
struct WeightPolicy {
  /// When set, these weights (aligned to the dataset) are used as given.
  std::optional<std::vector<double>> fixed;
  /// Otherwise a density is fitted on each training fold's targets and evaluated on both
  /// the training and validation rows.
  weighting::WeightConfig config;
};

/// Trains k x repeats models and aggregates their metrics in fold order. Fold failures
/// are rethrown with the repeat and fold in the message. When `snapshots` is given it
/// receives each fold's trained parameters, in fold order.
MetricsReport cross_validate(const zoo::ModelSpec& spec, const std::vector<FeatureSeries>& data,
                             const WeightPolicy& weights, const TrainConfig& config,
                             std::vector<zoo::Snapshot>* snapshots = nullptr);

struct GridResult {
  GridCell cell;
  std::optional<MetricsReport> report;
  std::string error;  // set when the cell failed
  double validation_wrmse = 0.0;
  double validation_mae = 0.0;
};

/// Lets callers adjust the spec/config of individual cells.
using CellHook = std::function<void(const GridCell&, zoo::ModelSpec&, TrainConfig&)>;

/// Cross-validates every grid cell and ranks them by mean validation wRMSE, then
/// validation MAE, then cell label. Failed cells are kept, unranked, at the end.
std::vector<GridResult> grid_search(const zoo::ModelSpec& base, const std::vector<FeatureSeries>& data,
                                    const GridSpec& grid, const WeightPolicy& weights,
                                    const TrainConfig& config, const CellHook& hook = {});

/// Ranked table: rank,dropout,learning_rate,batch_size,validation_wrmse,validation_mae,error.
std::string format_grid(const std::vector<GridResult>& results);

/// Runs `jobs` independent tasks on up to `threads` workers; exceptions are rethrown
/// for the lowest failing index after all tasks finish.
void parallel_for(std::size_t jobs, unsigned threads, const std::function<void(std::size_t)>& task);

}  // namespace fehforge::evaluate
