#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fgn/data.hpp"
#include "fgn/model.hpp"
#include "fgn/training.hpp"

namespace fgn {

/// MAPE denominator floor in target units (degrees), for targets that cross zero.
inline constexpr double kMapeGuard = 1e-2;

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
    /// Fraction, not percent.
    double mape = 0.0;
    /// Percent; empty when the truth is constant (SST = 0).
    std::optional<double> r2_percent;
    std::size_t count = 0;

    nlohmann::json to_json() const;
    bool operator==(const Metrics&) const = default;
};

/// MAE, RMSE, guarded MAPE and R² over paired values. DataError on empty or mismatched input.
Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth);

/**
 * Pools every horizon step of every window, after mapping predictions back
 * to original units with the dataset's training statistics.
 */
template <typename T>
Metrics evaluate(Forecaster<T>& model, const WindowedDataset& data, const std::vector<std::size_t>& starts,
                 std::size_t batch_size = 256);

struct TimingStats {
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    std::size_t trials = 0;

    nlohmann::json to_json() const;
};

/// Linear-interpolated percentile (q in [0, 100]) of unsorted samples.
double percentile(std::vector<double> samples, double q);

/// Wall-clock milliseconds per inference forward pass, after warmup.
template <typename T>
TimingStats bench_inference(Forecaster<T>& model, const ForecastBatch<T>& batch, std::size_t warmup = 10,
                            std::size_t trials = 100);

/// Runs fn(0..count-1) on up to `workers` threads; rethrows the lowest-index failure.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

std::string display_name(Variant variant);
std::string display_name(const ModelConfig& config);

struct RestartResult {
    std::uint64_t seed = 0;
    TrainTrace trace;
    Metrics test;
    double train_seconds = 0.0;
};

struct ExperimentResult {
    ModelConfig model;
    std::vector<RestartResult> runs;
    /// Run with the lowest best-validation loss.
    std::size_t best = 0;
    /// Metrics averaged over runs; R² only when defined for all of them.
    Metrics mean;
    /// Parameters of the best run.
    std::unique_ptr<Forecaster<float>> best_model;

    const RestartResult& best_run() const { return runs[best]; }
    /// Deterministic content; timing goes to timing_json.
    nlohmann::json to_json() const;
    nlohmann::json timing_json() const;
};

/**
 * Trains run.restarts independent models (seeds run.seed, run.seed + 1, ...)
 * on the same splits and scores each on the test windows.
 */
ExperimentResult run_experiment(const ModelConfig& model, const WindowedDataset& data, const TrainRunConfig& run,
                                std::size_t workers = 1);

inline const std::vector<std::size_t> kDefaultHorizons = {1, 20, 40, 60, 80, 100};

struct AblationCell {
    Ablation ablation = Ablation::glu_dcf;
    std::size_t horizon = 0;
    Metrics metrics;
    double train_seconds = 0.0;
};

/// Variant-by-horizon grid of test metrics.
struct AblationTable {
    std::vector<Ablation> ablations;
    std::vector<std::size_t> horizons;
    std::vector<AblationCell> cells;  // horizon-major, ablations in order

    const AblationCell& at(std::size_t horizon_index, std::size_t ablation_index) const;
    /// Rows are horizons, columns MAE and RMSE per variant; per-row minima are wrapped in **.
    std::string render_text() const;
    nlohmann::json to_json() const;
    nlohmann::json timing_json() const;
};

/// Trains and scores each ablation variant at each horizon with identical seeds and data.
AblationTable run_ablation(const ModelConfig& base, const RecordingTable& table, const DataConfig& data,
                           const TrainRunConfig& run, const std::vector<std::size_t>& horizons = kDefaultHorizons,
                           std::size_t workers = 1);

struct ReportRow {
    std::string model;
    std::size_t horizon_ms = 0;
    Metrics metrics;
};

/// Aligned text table with a units footer.
std::string render_metrics_table(const std::vector<ReportRow>& rows);
/// Fixed-point text with the given number of decimals.
std::string format_metric(double value, int decimals);
/// Two decimals, or "undef" when R² is undefined.
std::string format_r2(const std::optional<double>& r2_percent);
std::string metrics_footer();

}  // namespace fgn
