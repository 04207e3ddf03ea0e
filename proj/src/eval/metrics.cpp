#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "fgn/metrics.hpp"

namespace fgn {

Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) {
        throw DataError("metric inputs differ in length: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(truth.size()) + " targets");
    }
    if (pred.empty()) {
        throw DataError("metrics need at least one value");
    }
    const auto n = static_cast<double>(pred.size());
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0, truth_sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        pct_sum += std::abs(e) / std::max(std::abs(truth[i]), kMapeGuard);
        truth_sum += truth[i];
    }
    const double truth_mean = truth_sum / n;
    double sst = 0.0;
    for (double y : truth) {
        sst += (y - truth_mean) * (y - truth_mean);
    }
    Metrics m;
    m.count = pred.size();
    m.mae = abs_sum / n;
    m.rmse = std::sqrt(sq_sum / n);
    m.mape = pct_sum / n;
    // SST is zero exactly when every truth value is equal; rounding in the mean must not hide that.
    const bool constant = std::all_of(truth.begin(), truth.end(), [&](double y) { return y == truth[0]; });
    if (!constant && sst > 0.0) {
        // Rounding can take 1 - SSE/SST to exactly 1 for tiny errors; keep 100 reserved for exact predictions.
        const double r2 = 100.0 * (1.0 - sq_sum / sst);
        m.r2_percent = sq_sum > 0.0 ? std::min(r2, std::nextafter(100.0, 0.0)) : 100.0;
    }
    return m;
}

nlohmann::json Metrics::to_json() const {
    return {{"mae", mae},
            {"rmse", rmse},
            {"mape", mape},
            {"r2_percent", r2_percent ? nlohmann::json(*r2_percent) : nlohmann::json(nullptr)},
            {"count", count}};
}

template <typename T>
Metrics evaluate(Forecaster<T>& model, const WindowedDataset& data, const std::vector<std::size_t>& starts,
                 std::size_t batch_size) {
    const ModelConfig& c = model.config();
    if (c.output_dim != 1) {
        throw DataError("evaluation expects a single target channel, model has output_dim " +
                        std::to_string(c.output_dim));
    }
    if (c.horizon != data.horizon() || c.lookback != data.lookback() || c.label_len != data.label_len()) {
        throw DataError("model windows (lookback " + std::to_string(c.lookback) + ", label " +
                        std::to_string(c.label_len) + ", horizon " + std::to_string(c.horizon) +
                        ") do not match the dataset (" + std::to_string(data.lookback()) + ", " +
                        std::to_string(data.label_len()) + ", " + std::to_string(data.horizon()) + ")");
    }
    if (c.input_dim != data.input_dim()) {
        throw DataError("model expects " + std::to_string(c.input_dim) + " input channels, dataset has " +
                        std::to_string(data.input_dim()));
    }
    std::vector<double> pred;
    pred.reserve(starts.size() * c.horizon);
    for (std::size_t begin = 0; begin < starts.size(); begin += batch_size) {
        const std::size_t end = std::min(starts.size(), begin + batch_size);
        const std::vector<std::size_t> chunk(starts.begin() + static_cast<std::ptrdiff_t>(begin),
                                             starts.begin() + static_cast<std::ptrdiff_t>(end));
        const Tensor<T> out = model.forward(data.batch<T>(chunk), false);
        for (T v : out.data()) {
            pred.push_back(data.denormalize_target(static_cast<double>(v)));
        }
    }
    const std::vector<double> truth = data.raw_targets(starts);
    return compute_metrics(pred, truth);
}

double percentile(std::vector<double> samples, double q) {
    if (samples.empty()) {
        throw DataError("percentile of an empty sample");
    }
    std::sort(samples.begin(), samples.end());
    const double rank = q / 100.0 * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    return samples[lo] + (rank - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

nlohmann::json TimingStats::to_json() const {
    return {{"mean_ms", mean_ms}, {"p50_ms", p50_ms}, {"p95_ms", p95_ms}, {"trials", trials}};
}

template <typename T>
TimingStats bench_inference(Forecaster<T>& model, const ForecastBatch<T>& batch, std::size_t warmup,
                            std::size_t trials) {
    if (trials == 0) {
        throw ConfigError("bench_inference needs at least one trial");
    }
    for (std::size_t i = 0; i < warmup; ++i) {
        model.forward(batch, false);
    }
    std::vector<double> samples;
    samples.reserve(trials);
    double total = 0.0;
    for (std::size_t i = 0; i < trials; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const Tensor<T> out = model.forward(batch, false);
        const auto stop = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(stop - start).count();
        samples.push_back(ms);
        total += ms;
    }
    TimingStats stats;
    stats.trials = trials;
    stats.mean_ms = total / static_cast<double>(trials);
    stats.p50_ms = percentile(samples, 50.0);
    stats.p95_ms = percentile(samples, 95.0);
    return stats;
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    std::vector<std::exception_ptr> errors(count);
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) {
            threads.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : threads) {
            t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

std::string display_name(Variant variant) {
    switch (variant) {
        case Variant::focalgatednet:
            return "FocalGatedNet";
        case Variant::transformer:
            return "Transformer";
        case Variant::dlinear:
            return "DLinear";
        case Variant::nlinear:
            return "NLinear";
    }
    return "?";
}

std::string display_name(const ModelConfig& config) {
    if (config.variant == Variant::focalgatednet && config.ablation != Ablation::glu_dcf) {
        return "FocalGatedNet (" + to_string(config.ablation) + ")";
    }
    return display_name(config.variant);
}

// ---------------------------------------------------------------------------
// Experiments

nlohmann::json ExperimentResult::to_json() const {
    nlohmann::json runs_json = nlohmann::json::array();
    for (const auto& r : runs) {
        runs_json.push_back({{"seed", r.seed}, {"trace", r.trace.to_json()}, {"test", r.test.to_json()}});
    }
    return {{"model", model.to_json()},
            {"runs", runs_json},
            {"best_run", best},
            {"best", runs[best].test.to_json()},
            {"mean", mean.to_json()}};
}

nlohmann::json ExperimentResult::timing_json() const {
    nlohmann::json seconds = nlohmann::json::array();
    for (const auto& r : runs) {
        seconds.push_back(r.train_seconds);
    }
    return {{"train_seconds", seconds}};
}

namespace {

Metrics average(const std::vector<RestartResult>& runs) {
    Metrics m;
    bool r2_defined = true;
    double r2 = 0.0;
    for (const auto& r : runs) {
        m.mae += r.test.mae;
        m.rmse += r.test.rmse;
        m.mape += r.test.mape;
        m.count = r.test.count;
        if (r.test.r2_percent) {
            r2 += *r.test.r2_percent;
        } else {
            r2_defined = false;
        }
    }
    const auto n = static_cast<double>(runs.size());
    m.mae /= n;
    m.rmse /= n;
    m.mape /= n;
    if (r2_defined) {
        m.r2_percent = r2 / n;
    }
    return m;
}

}  // namespace

ExperimentResult run_experiment(const ModelConfig& model, const WindowedDataset& data, const TrainRunConfig& run,
                                std::size_t workers) {
    run.validate();
    model.validate();
    ExperimentResult result;
    result.model = model;
    result.runs.resize(run.restarts);
    std::vector<std::unique_ptr<Forecaster<float>>> models(run.restarts);
    parallel_for(run.restarts, workers, [&](std::size_t r) {
        TrainRunConfig single = run;
        single.seed = run.seed + r;
        single.restarts = 1;
        auto net = build_model<float>(model, single.seed);
        const auto start = std::chrono::steady_clock::now();
        RestartResult& out = result.runs[r];
        out.seed = single.seed;
        out.trace = train(*net, data, single);
        out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.test = evaluate(*net, data, data.test_starts());
        models[r] = std::move(net);
    });
    for (std::size_t r = 1; r < result.runs.size(); ++r) {
        if (result.runs[r].trace.best_validation_loss < result.runs[result.best].trace.best_validation_loss) {
            result.best = r;
        }
    }
    result.mean = average(result.runs);
    result.best_model = std::move(models[result.best]);
    return result;
}

// ---------------------------------------------------------------------------
// Ablation

const AblationCell& AblationTable::at(std::size_t horizon_index, std::size_t ablation_index) const {
    return cells.at(horizon_index * ablations.size() + ablation_index);
}

AblationTable run_ablation(const ModelConfig& base, const RecordingTable& table, const DataConfig& data,
                           const TrainRunConfig& run, const std::vector<std::size_t>& horizons, std::size_t workers) {
    if (horizons.empty()) {
        throw ConfigError("ablation needs at least one horizon");
    }
    AblationTable grid;
    grid.ablations = {Ablation::glu_dcf, Ablation::dcf_only, Ablation::glu_only};
    grid.horizons = horizons;
    grid.cells.resize(horizons.size() * grid.ablations.size());
    std::vector<std::unique_ptr<WindowedDataset>> datasets(horizons.size());
    for (std::size_t h = 0; h < horizons.size(); ++h) {
        datasets[h] = std::make_unique<WindowedDataset>(table, data, base.lookback, base.label_len, horizons[h]);
    }
    parallel_for(grid.cells.size(), workers, [&](std::size_t i) {
        const std::size_t h = i / grid.ablations.size();
        ModelConfig config = base;
        config.variant = Variant::focalgatednet;
        config.ablation = grid.ablations[i % grid.ablations.size()];
        config.horizon = horizons[h];
        config.input_dim = datasets[h]->input_dim();
        const ExperimentResult result = run_experiment(config, *datasets[h], run, 1);
        AblationCell& cell = grid.cells[i];
        cell.ablation = config.ablation;
        cell.horizon = horizons[h];
        cell.metrics = result.best_run().test;
        for (const auto& r : result.runs) {
            cell.train_seconds += r.train_seconds;
        }
    });
    return grid;
}

std::string AblationTable::render_text() const {
    // Columns: horizon, then MAE and RMSE per variant.
    std::vector<std::string> header = {"Horizon"};
    for (Ablation a : ablations) {
        header.push_back(to_string(a) + " MAE");
        header.push_back(to_string(a) + " RMSE");
    }
    std::vector<std::vector<std::string>> rows;
    for (std::size_t h = 0; h < horizons.size(); ++h) {
        double best_mae = INFINITY, best_rmse = INFINITY;
        for (std::size_t a = 0; a < ablations.size(); ++a) {
            best_mae = std::min(best_mae, at(h, a).metrics.mae);
            best_rmse = std::min(best_rmse, at(h, a).metrics.rmse);
        }
        std::vector<std::string> row = {std::to_string(horizons[h]) + " ms"};
        for (std::size_t a = 0; a < ablations.size(); ++a) {
            const Metrics& m = at(h, a).metrics;
            const std::string mae = format_metric(m.mae, 3);
            const std::string rmse = format_metric(m.rmse, 3);
            row.push_back(m.mae == best_mae ? "**" + mae + "**" : mae);
            row.push_back(m.rmse == best_rmse ? "**" + rmse + "**" : rmse);
        }
        rows.push_back(std::move(row));
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : rows) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            out << (c == 0 ? "" : "  ") << std::setw(static_cast<int>(width[c])) << (c == 0 ? std::left : std::right)
                << cells[c];
        }
        out << '\n';
    };
    emit(header);
    for (const auto& row : rows) {
        emit(row);
    }
    out << "Per-horizon best MAE and RMSE marked with **.\n" << metrics_footer();
    return out.str();
}

nlohmann::json AblationTable::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& cell : cells) {
        rows.push_back({{"ablation", to_string(cell.ablation)},
                        {"horizon_ms", cell.horizon},
                        {"metrics", cell.metrics.to_json()}});
    }
    return {{"horizons", horizons}, {"rows", rows}};
}

nlohmann::json AblationTable::timing_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& cell : cells) {
        rows.push_back({{"ablation", to_string(cell.ablation)},
                        {"horizon_ms", cell.horizon},
                        {"train_seconds", cell.train_seconds}});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Reports

std::string format_metric(double value, int decimals) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(decimals) << value;
    return out.str();
}

std::string format_r2(const std::optional<double>& r2_percent) {
    return r2_percent ? format_metric(*r2_percent, 2) : "undef";
}

std::string metrics_footer() {
    return "MAE/RMSE in target units (degrees). MAPE is a fraction with denominator max(|y|, " +
           format_metric(kMapeGuard, 2) + "). R² in percent; undef when the truth is constant.\n";
}

std::string render_metrics_table(const std::vector<ReportRow>& rows) {
    const std::vector<std::string> header = {"Model", "Horizon", "MAE", "RMSE", "MAPE", "R² (%)"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        cells.push_back({r.model, std::to_string(r.horizon_ms) + " ms", format_metric(r.metrics.mae, 3),
                         format_metric(r.metrics.rmse, 3), format_metric(r.metrics.mape, 3),
                         format_r2(r.metrics.r2_percent)});
    }
    // Display width: "R²" is one column wide but two bytes in UTF-8.
    auto display = [](const std::string& s) {
        std::size_t n = 0;
        for (unsigned char ch : s) {
            n += (ch & 0xC0) != 0x80;
        }
        return n;
    };
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = display(header[c]);
        for (const auto& row : cells) {
            width[c] = std::max(width[c], display(row[c]));
        }
    }
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            const std::string pad(width[c] - display(row[c]), ' ');
            if (c > 0) {
                line += "  ";
            }
            line += c == 0 ? row[c] + pad : pad + row[c];
        }
        out += line + '\n';
    };
    emit(header);
    for (const auto& row : cells) {
        emit(row);
    }
    out += metrics_footer();
    return out;
}

template Metrics evaluate<float>(Forecaster<float>&, const WindowedDataset&, const std::vector<std::size_t>&,
                                 std::size_t);
template Metrics evaluate<double>(Forecaster<double>&, const WindowedDataset&, const std::vector<std::size_t>&,
                                  std::size_t);
template TimingStats bench_inference<float>(Forecaster<float>&, const ForecastBatch<float>&, std::size_t,
                                            std::size_t);
template TimingStats bench_inference<double>(Forecaster<double>&, const ForecastBatch<double>&, std::size_t,
                                             std::size_t);

}  // namespace fgn
