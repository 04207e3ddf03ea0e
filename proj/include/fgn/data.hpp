#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fgn/errors.hpp"
#include "fgn/model.hpp"

namespace fgn {

/// A channel with zero variance on the training rows cannot be standardized.
class ZeroVarianceError : public DataError {
public:
    using DataError::DataError;
};

/// Time-indexed multichannel recording. Columns are stored channel-major.
struct RecordingTable {
    std::vector<double> time_ms;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return time_ms.size(); }
    std::size_t channel_count() const { return names.size(); }
    /// Index of a named channel; DataError if absent.
    std::size_t index_of(const std::string& name) const;
    const std::vector<double>& column(const std::string& name) const { return columns[index_of(name)]; }
    /// Mean sample rate from the first and last timestamps.
    double sample_rate_hz() const;
    void add_column(std::string name, std::vector<double> values);
};

struct CsvSchema {
    std::string time_column = "time_ms";
    /// Columns that must be present besides the time column.
    std::vector<std::string> required;
};

/// Parses comma-separated text with a header row. `source` names the input in error messages.
RecordingTable parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "<stream>");
RecordingTable load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
/// Writes shortest round-trip decimal text, so output is byte-stable and reloads exactly.
void write_csv(std::ostream& out, const RecordingTable& table, const std::string& time_column = "time_ms");
void write_csv(const std::filesystem::path& path, const RecordingTable& table,
               const std::string& time_column = "time_ms");

/**
 * Linear interpolation onto a uniform grid at `target_rate_hz`.
 *
 * The grid starts at the first timestamp and ends at the last grid point not
 * after the final sample; interpolation positions are clamped to the sampled
 * range. Requires target rate >= source rate.
 */
RecordingTable resample_linear(const RecordingTable& table, double target_rate_hz);

/// Resamples every table to `rate_hz` and joins their channels, truncating to the shortest.
RecordingTable align_tables(const std::vector<RecordingTable>& tables, double rate_hz);

/// Per-channel mean and population standard deviation.
struct NormalizationStats {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> std;

    /// Fits on rows [row_begin, row_end) of the named channels.
    static NormalizationStats fit(const RecordingTable& table, const std::vector<std::string>& channels,
                                  std::size_t row_begin, std::size_t row_end);
    /// Identity statistics (mean 0, std 1), used when normalization is disabled.
    static NormalizationStats identity(const std::vector<std::string>& channels);

    double normalize(std::size_t channel, double value) const { return (value - mean[channel]) / std[channel]; }
    double denormalize(std::size_t channel, double value) const { return value * std[channel] + mean[channel]; }
    std::size_t index_of(const std::string& name) const;
    /// Normalized copy of the named channels of `table`.
    RecordingTable apply(const RecordingTable& table) const;
    RecordingTable invert(const RecordingTable& table) const;

    nlohmann::json to_json() const;
    static NormalizationStats from_json(const nlohmann::json& j);
    bool operator==(const NormalizationStats&) const = default;
};

/// Start offsets of every window of `lookback + horizon` rows in [begin, end), `stride` apart.
std::vector<std::size_t> window_starts(std::size_t begin, std::size_t end, std::size_t lookback, std::size_t horizon,
                                       std::size_t stride);
/// floor((length - lookback - horizon) / stride) + 1, or 0 when the region is too short.
std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon, std::size_t stride);

struct DataConfig {
    std::string time_column = "time_ms";
    std::string target = "knee_angle";
    /// Input channels; empty means every channel except time and target.
    std::vector<std::string> features;
    /// Channels dropped from the default feature set.
    std::vector<std::string> exclude_features;
    double train_fraction = 0.8;
    /// Tail share of the training region held out for early stopping.
    double validation_fraction = 0.1;
    std::size_t train_stride = 1;
    std::size_t eval_stride = 1;
    bool normalize = true;

    void validate() const;
    nlohmann::json to_json() const;
    static DataConfig from_json(const nlohmann::json& j);
    bool operator==(const DataConfig&) const = default;
};

/// Row boundaries of the chronological split: train [0, validation_begin), validation
/// [validation_begin, test_begin), test [test_begin, rows).
struct SplitBounds {
    std::size_t validation_begin = 0;
    std::size_t test_begin = 0;
    std::size_t rows = 0;
};

SplitBounds split_bounds(std::size_t rows, double train_fraction, double validation_fraction);

/**
 * Normalized, windowed view of a recording.
 *
 * Inputs and targets are stored once; each window is a start row. Statistics
 * come from the training region (train plus validation rows) only.
 */
class WindowedDataset {
public:
    WindowedDataset(const RecordingTable& table, const DataConfig& data, std::size_t lookback, std::size_t label_len,
                    std::size_t horizon);
    /// Reuses fitted statistics, e.g. when evaluating a checkpoint.
    WindowedDataset(const RecordingTable& table, const DataConfig& data, std::size_t lookback, std::size_t label_len,
                    std::size_t horizon, NormalizationStats stats);

    const std::vector<std::size_t>& train_starts() const { return train_; }
    const std::vector<std::size_t>& validation_starts() const { return validation_; }
    const std::vector<std::size_t>& test_starts() const { return test_; }
    const SplitBounds& bounds() const { return bounds_; }
    const NormalizationStats& stats() const { return stats_; }
    const std::vector<std::string>& features() const { return features_; }
    std::size_t input_dim() const { return features_.size(); }
    std::size_t lookback() const { return lookback_; }
    std::size_t label_len() const { return label_len_; }
    std::size_t horizon() const { return horizon_; }
    const std::vector<double>& time_ms() const { return time_ms_; }

    /// Batch for the given window starts, in the given order.
    template <typename T>
    ForecastBatch<T> batch(const std::vector<std::size_t>& starts) const;
    /// Raw target (original units) for each window, [starts.size() * horizon], row-major.
    std::vector<double> raw_targets(const std::vector<std::size_t>& starts) const;
    /// Maps a normalized target value back to original units.
    double denormalize_target(double value) const { return stats_.denormalize(target_channel_, value); }

private:
    void build(const RecordingTable& table, const DataConfig& data);

    std::size_t lookback_;
    std::size_t label_len_;
    std::size_t horizon_;
    std::vector<std::string> features_;
    NormalizationStats stats_;
    std::size_t target_channel_ = 0;  // index of the target in stats_
    SplitBounds bounds_;
    std::vector<double> time_ms_;
    std::vector<double> inputs_;      // [rows, features], normalized
    std::vector<double> target_;      // [rows], normalized
    std::vector<double> raw_target_;  // [rows]
    std::vector<std::size_t> train_, validation_, test_;
};

struct SynthGaitOptions {
    std::size_t cycles = 60;
    double cycle_ms = 1000.0;
    double rate_hz = 1000.0;
    double noise_std = 0.05;
    std::uint64_t seed = 0;
};

/// Knee flexion in degrees at gait phase `phase` (radians): three harmonics spanning about 0 to 70.
double knee_angle_profile(double phase);

/**
 * Synthetic gait recording: `time_ms`, 40 sensor-like channels (11 EMG,
 * 24 IMU, 5 goniometer) and the `knee_angle` target.
 *
 * The target is the harmonic profile plus a slow mean-reverting deviation
 * that starts at zero and scales with noise_std; it makes far horizons
 * harder than near ones. Sensor channels carry additive Gaussian noise of
 * noise_std times their amplitude. With noise_std = 0 every channel is an
 * exact function of phase.
 */
RecordingTable synth_gait(const SynthGaitOptions& options);

}  // namespace fgn
