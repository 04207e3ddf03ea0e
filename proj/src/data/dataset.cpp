#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "fgn/data.hpp"

namespace fgn {

// ---------------------------------------------------------------------------
// Normalization

NormalizationStats NormalizationStats::fit(const RecordingTable& table, const std::vector<std::string>& channels,
                                           std::size_t row_begin, std::size_t row_end) {
    if (row_end <= row_begin || row_end > table.rows()) {
        throw DataError("normalizer needs a non-empty row range inside the table, got [" + std::to_string(row_begin) +
                        ", " + std::to_string(row_end) + ") of " + std::to_string(table.rows()));
    }
    NormalizationStats stats;
    const auto n = static_cast<double>(row_end - row_begin);
    for (const auto& name : channels) {
        const auto& column = table.column(name);
        double total = 0.0;
        for (std::size_t r = row_begin; r < row_end; ++r) {
            total += column[r];
        }
        const double mean = total / n;
        double squares = 0.0;
        for (std::size_t r = row_begin; r < row_end; ++r) {
            squares += (column[r] - mean) * (column[r] - mean);
        }
        const double std = std::sqrt(squares / n);
        if (!(std > 0.0)) {
            throw ZeroVarianceError("channel '" + name + "' has zero variance on the training rows");
        }
        stats.names.push_back(name);
        stats.mean.push_back(mean);
        stats.std.push_back(std);
    }
    return stats;
}

NormalizationStats NormalizationStats::identity(const std::vector<std::string>& channels) {
    return {channels, std::vector<double>(channels.size(), 0.0), std::vector<double>(channels.size(), 1.0)};
}

std::size_t NormalizationStats::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw DataError("normalization statistics have no channel '" + name + "'");
    }
    return static_cast<std::size_t>(it - names.begin());
}

RecordingTable NormalizationStats::apply(const RecordingTable& table) const {
    RecordingTable out = table;
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (auto& v : out.columns[table.index_of(names[i])]) {
            v = normalize(i, v);
        }
    }
    return out;
}

RecordingTable NormalizationStats::invert(const RecordingTable& table) const {
    RecordingTable out = table;
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (auto& v : out.columns[table.index_of(names[i])]) {
            v = denormalize(i, v);
        }
    }
    return out;
}

nlohmann::json NormalizationStats::to_json() const {
    return {{"names", names}, {"mean", mean}, {"std", std}};
}

NormalizationStats NormalizationStats::from_json(const nlohmann::json& j) {
    NormalizationStats stats;
    try {
        stats.names = j.at("names").get<std::vector<std::string>>();
        stats.mean = j.at("mean").get<std::vector<double>>();
        stats.std = j.at("std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed normalization statistics: ") + e.what());
    }
    if (stats.mean.size() != stats.names.size() || stats.std.size() != stats.names.size()) {
        throw DataError("normalization statistics have mismatched lengths");
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Windows and splits

std::size_t window_count(std::size_t length, std::size_t lookback, std::size_t horizon, std::size_t stride) {
    if (stride == 0) {
        throw ConfigError("window stride must be positive");
    }
    if (length < lookback + horizon) {
        return 0;
    }
    return (length - lookback - horizon) / stride + 1;
}

std::vector<std::size_t> window_starts(std::size_t begin, std::size_t end, std::size_t lookback, std::size_t horizon,
                                       std::size_t stride) {
    const std::size_t count = window_count(end > begin ? end - begin : 0, lookback, horizon, stride);
    std::vector<std::size_t> starts(count);
    for (std::size_t i = 0; i < count; ++i) {
        starts[i] = begin + i * stride;
    }
    return starts;
}

SplitBounds split_bounds(std::size_t rows, double train_fraction, double validation_fraction) {
    SplitBounds b;
    b.rows = rows;
    b.test_begin = static_cast<std::size_t>(std::floor(static_cast<double>(rows) * train_fraction));
    const auto held_out = static_cast<std::size_t>(std::floor(static_cast<double>(b.test_begin) * validation_fraction));
    b.validation_begin = b.test_begin - held_out;
    return b;
}

void DataConfig::validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must be in (0, 1)");
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation_fraction must be in [0, 1)");
    }
    if (train_stride == 0 || eval_stride == 0) {
        throw ConfigError("window strides must be positive");
    }
    if (target.empty()) {
        throw ConfigError("target column name is empty");
    }
}

nlohmann::json DataConfig::to_json() const {
    return {{"time_column", time_column},       {"target", target},
            {"features", features},             {"exclude_features", exclude_features},
            {"train_fraction", train_fraction}, {"validation_fraction", validation_fraction},
            {"train_stride", train_stride},     {"eval_stride", eval_stride},
            {"normalize", normalize}};
}

DataConfig DataConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("data config must be a JSON object");
    }
    DataConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "time_column") c.time_column = value.get<std::string>();
            else if (key == "target") c.target = value.get<std::string>();
            else if (key == "features") c.features = value.get<std::vector<std::string>>();
            else if (key == "exclude_features") c.exclude_features = value.get<std::vector<std::string>>();
            else if (key == "train_fraction") c.train_fraction = value.get<double>();
            else if (key == "validation_fraction") c.validation_fraction = value.get<double>();
            else if (key == "train_stride") c.train_stride = value.get<std::size_t>();
            else if (key == "eval_stride") c.eval_stride = value.get<std::size_t>();
            else if (key == "normalize") c.normalize = value.get<bool>();
            else throw ConfigError("unknown data config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("data config key '" + key + "': " + e.what());
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Windowed dataset

namespace {

std::vector<std::string> resolve_features(const RecordingTable& table, const DataConfig& data) {
    std::vector<std::string> features = data.features;
    if (features.empty()) {
        for (const auto& name : table.names) {
            if (name != data.target) {
                features.push_back(name);
            }
        }
    }
    for (const auto& name : data.exclude_features) {
        table.index_of(name);
        features.erase(std::remove(features.begin(), features.end(), name), features.end());
    }
    if (features.empty()) {
        throw DataError("no input channels left after exclusions");
    }
    for (const auto& name : features) {
        table.index_of(name);
    }
    return features;
}

}  // namespace

WindowedDataset::WindowedDataset(const RecordingTable& table, const DataConfig& data, std::size_t lookback,
                                 std::size_t label_len, std::size_t horizon)
    : lookback_(lookback), label_len_(label_len), horizon_(horizon) {
    data.validate();
    features_ = resolve_features(table, data);
    bounds_ = split_bounds(table.rows(), data.train_fraction, data.validation_fraction);
    std::vector<std::string> channels = features_;
    if (std::find(channels.begin(), channels.end(), data.target) == channels.end()) {
        channels.push_back(data.target);
    }
    table.index_of(data.target);
    // Statistics see only rows before the test boundary.
    stats_ = data.normalize ? NormalizationStats::fit(table, channels, 0, bounds_.test_begin)
                            : NormalizationStats::identity(channels);
    build(table, data);
}

WindowedDataset::WindowedDataset(const RecordingTable& table, const DataConfig& data, std::size_t lookback,
                                 std::size_t label_len, std::size_t horizon, NormalizationStats stats)
    : lookback_(lookback), label_len_(label_len), horizon_(horizon), stats_(std::move(stats)) {
    data.validate();
    features_ = resolve_features(table, data);
    bounds_ = split_bounds(table.rows(), data.train_fraction, data.validation_fraction);
    build(table, data);
}

void WindowedDataset::build(const RecordingTable& table, const DataConfig& data) {
    if (lookback_ == 0 || horizon_ == 0) {
        throw ConfigError("lookback and horizon must be positive");
    }
    if (label_len_ > lookback_) {
        throw ConfigError("label_len exceeds lookback");
    }
    const std::size_t rows = table.rows();
    const std::size_t f = features_.size();
    target_channel_ = stats_.index_of(data.target);
    time_ms_ = table.time_ms;
    inputs_.resize(rows * f);
    for (std::size_t c = 0; c < f; ++c) {
        const std::size_t stat = stats_.index_of(features_[c]);
        const auto& column = table.column(features_[c]);
        for (std::size_t r = 0; r < rows; ++r) {
            inputs_[r * f + c] = stats_.normalize(stat, column[r]);
        }
    }
    raw_target_ = table.column(data.target);
    target_.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        target_[r] = stats_.normalize(target_channel_, raw_target_[r]);
    }

    train_ = window_starts(0, bounds_.validation_begin, lookback_, horizon_, data.train_stride);
    validation_ = window_starts(bounds_.validation_begin, bounds_.test_begin, lookback_, horizon_, data.eval_stride);
    test_ = window_starts(bounds_.test_begin, rows, lookback_, horizon_, data.eval_stride);
    const std::string need = std::to_string(lookback_ + horizon_);
    if (train_.empty()) {
        throw DataError("table too short: training region has " + std::to_string(bounds_.validation_begin) +
                        " rows, a window needs " + need);
    }
    if (test_.empty()) {
        throw DataError("table too short: test region has " + std::to_string(rows - bounds_.test_begin) +
                        " rows, a window needs " + need);
    }
    if (data.validation_fraction > 0.0 && validation_.empty()) {
        throw DataError("table too short: validation region has " +
                        std::to_string(bounds_.test_begin - bounds_.validation_begin) + " rows, a window needs " +
                        need);
    }
}

template <typename T>
ForecastBatch<T> WindowedDataset::batch(const std::vector<std::size_t>& starts) const {
    const std::size_t b = starts.size();
    const std::size_t f = features_.size();
    const std::size_t dec = label_len_ + horizon_;
    std::vector<T> encoder(b * lookback_ * f);
    std::vector<T> decoder(b * dec * f, T(0));
    std::vector<T> target(b * horizon_);
    std::vector<T> history(b * lookback_);
    for (std::size_t n = 0; n < b; ++n) {
        const std::size_t s = starts[n];
        if (s + lookback_ + horizon_ > time_ms_.size()) {
            throw DataError("window at row " + std::to_string(s) + " runs past the end of the table");
        }
        for (std::size_t t = 0; t < lookback_; ++t) {
            for (std::size_t c = 0; c < f; ++c) {
                encoder[(n * lookback_ + t) * f + c] = static_cast<T>(inputs_[(s + t) * f + c]);
            }
            history[n * lookback_ + t] = static_cast<T>(target_[s + t]);
        }
        for (std::size_t t = 0; t < label_len_; ++t) {
            const std::size_t row = s + lookback_ - label_len_ + t;
            for (std::size_t c = 0; c < f; ++c) {
                decoder[(n * dec + t) * f + c] = static_cast<T>(inputs_[row * f + c]);
            }
        }
        for (std::size_t h = 0; h < horizon_; ++h) {
            target[n * horizon_ + h] = static_cast<T>(target_[s + lookback_ + h]);
        }
    }
    ForecastBatch<T> out;
    out.encoder_input = Tensor<T>({b, lookback_, f}, std::move(encoder));
    out.decoder_input = Tensor<T>({b, dec, f}, std::move(decoder));
    out.target = Tensor<T>({b, horizon_, 1}, std::move(target));
    out.target_history = Tensor<T>({b, lookback_, 1}, std::move(history));
    return out;
}

std::vector<double> WindowedDataset::raw_targets(const std::vector<std::size_t>& starts) const {
    std::vector<double> out;
    out.reserve(starts.size() * horizon_);
    for (std::size_t s : starts) {
        for (std::size_t h = 0; h < horizon_; ++h) {
            out.push_back(raw_target_[s + lookback_ + h]);
        }
    }
    return out;
}

template ForecastBatch<float> WindowedDataset::batch<float>(const std::vector<std::size_t>&) const;
template ForecastBatch<double> WindowedDataset::batch<double>(const std::vector<std::size_t>&) const;

}  // namespace fgn
