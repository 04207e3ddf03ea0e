#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fgn/metrics.hpp"

namespace fgn::cli {

namespace fs = std::filesystem;

namespace {

/// Bad flag values; reported like a parse failure.
class UsageFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be read or written.
class IoFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoFailure("cannot open '" + path.string() + "' for writing");
    }
    file << text;
    if (!file) {
        throw IoFailure("failed writing '" + path.string() + "'");
    }
}

void make_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoFailure("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
}

RecordingTable load_recording(const fs::path& path, const DataConfig& data) {
    if (!fs::exists(path)) {
        throw IoFailure("data file '" + path.string() + "' does not exist");
    }
    CsvSchema schema;
    schema.time_column = data.time_column;
    schema.required = {data.target};
    return load_csv(path, schema);
}

/// FGN_SEED, when set, replaces the configured training seed.
void apply_seed_env(TrainRunConfig& run) {
    const char* text = std::getenv("FGN_SEED");
    if (text == nullptr) {
        return;
    }
    try {
        std::size_t used = 0;
        const unsigned long long seed = std::stoull(text, &used);
        if (used != std::string(text).size()) {
            throw std::invalid_argument("trailing characters");
        }
        run.seed = seed;
    } catch (const std::exception&) {
        throw ConfigError(std::string("FGN_SEED must be a non-negative integer, got '") + text + "'");
    }
}

std::string dump(const nlohmann::json& j) {
    return j.dump(2) + "\n";
}

std::string timing_text(const nlohmann::json& timing) {
    return "\nTiming (wall clock, not reproducible)\n" + timing.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

struct SynthArgs {
    fs::path out;
    std::size_t cycles = 60;
    double noise = 0.05;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    if (a.cycles == 0) {
        throw UsageFailure("--cycles must be at least 1");
    }
    if (!(a.noise >= 0.0)) {
        throw UsageFailure("--noise must be non-negative");
    }
    SynthGaitOptions options;
    options.cycles = a.cycles;
    options.noise_std = a.noise;
    options.seed = a.seed;
    const RecordingTable table = synth_gait(options);
    if (a.out.has_parent_path()) {
        make_out_dir(a.out.parent_path());
    }
    std::ostringstream text;
    write_csv(text, table);
    write_text(a.out, text.str());
    out << "wrote " << table.rows() << " rows x " << table.channel_count() << " channels to " << a.out.string()
        << "\n";
    return kOk;
}

struct CommonArgs {
    fs::path config;
    std::string data;
    std::string out;
    std::size_t workers = 0;
};

RunConfigFile resolve(const CommonArgs& a) {
    RunConfigFile cfg = a.config.empty() ? RunConfigFile{} : RunConfigFile::load(a.config);
    if (!a.data.empty()) {
        cfg.data_path = a.data;
    }
    if (!a.out.empty()) {
        cfg.out_dir = a.out;
    }
    if (a.workers > 0) {
        cfg.workers = a.workers;
    }
    apply_seed_env(cfg.train);
    if (!cfg.data_path) {
        throw UsageFailure("no data: pass --data or set data_path in the config");
    }
    return cfg;
}

struct TrainArgs {
    CommonArgs common;
    std::optional<std::size_t> horizon;
    std::string variant;
    std::string ablation;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    if (a.horizon && *a.horizon == 0) {
        throw UsageFailure("--horizon must be at least 1");
    }
    RunConfigFile cfg = resolve(a.common);
    if (a.horizon) cfg.model.horizon = *a.horizon;
    if (!a.variant.empty()) cfg.model.variant = parse_variant(a.variant);
    if (!a.ablation.empty()) cfg.model.ablation = parse_ablation(a.ablation);

    const RecordingTable table = load_recording(*cfg.data_path, cfg.data);
    const WindowedDataset data(table, cfg.data, cfg.model.lookback, cfg.model.label_len, cfg.model.horizon);
    cfg.model.input_dim = data.input_dim();
    cfg.model.validate();

    const ExperimentResult result = run_experiment(cfg.model, data, cfg.train, cfg.workers);
    make_out_dir(cfg.out_dir);
    save_checkpoint(cfg.out_dir / "checkpoint.fgn", make_checkpoint(*result.best_model, cfg.data, data.stats()));
    write_text(cfg.out_dir / "trace.json", dump(result.best_run().trace.to_json()));

    const std::string name = display_name(cfg.model);
    nlohmann::json report = {{"command", "train"},
                             {"model_name", name},
                             {"horizon_ms", cfg.model.horizon},
                             {"test", result.best_run().test.to_json()},
                             {"config", cfg.to_json()},
                             {"experiment", result.to_json()},
                             {"timing", result.timing_json()}};
    write_text(cfg.out_dir / "report.json", dump(report));

    std::vector<ReportRow> rows = {{name, cfg.model.horizon, result.best_run().test}};
    if (result.runs.size() > 1) {
        rows.push_back({name + " (mean of " + std::to_string(result.runs.size()) + ")", cfg.model.horizon,
                        result.mean});
    }
    std::string text = render_metrics_table(rows);
    text += "Best run seed " + std::to_string(result.best_run().seed) + ", best epoch " +
            std::to_string(result.best_run().trace.best_epoch) + " of " +
            std::to_string(result.best_run().trace.epochs.size()) + ".\n";
    write_text(cfg.out_dir / "report.txt", text + timing_text(report["timing"]));
    out << text << "artifacts in " << cfg.out_dir.string() << "\n";
    return kOk;
}

struct EvalArgs {
    fs::path checkpoint;
    fs::path data;
    std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    auto model = ckpt.restore();
    const ModelConfig& c = model->config();
    const RecordingTable table = load_recording(a.data, ckpt.data);
    const WindowedDataset data(table, ckpt.data, c.lookback, c.label_len, c.horizon, ckpt.normalization);
    const Metrics m = evaluate(*model, data, data.test_starts());
    const std::string text = render_metrics_table({{display_name(c), c.horizon, m}});
    if (!a.out.empty()) {
        const fs::path dir = a.out;
        make_out_dir(dir);
        nlohmann::json report = {{"command", "eval"},
                                 {"model_name", display_name(c)},
                                 {"horizon_ms", c.horizon},
                                 {"test", m.to_json()}};
        write_text(dir / "report.json", dump(report));
        write_text(dir / "report.txt", text);
    }
    out << text;
    return kOk;
}

struct AblateArgs {
    CommonArgs common;
    std::vector<std::size_t> horizons;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
    RunConfigFile cfg = resolve(a.common);
    if (!a.horizons.empty()) cfg.ablation_horizons = a.horizons;
    for (std::size_t h : cfg.ablation_horizons) {
        if (h == 0) throw UsageFailure("ablation horizons must be at least 1");
    }
    const RecordingTable table = load_recording(*cfg.data_path, cfg.data);
    const AblationTable grid = run_ablation(cfg.model, table, cfg.data, cfg.train, cfg.ablation_horizons, cfg.workers);
    make_out_dir(cfg.out_dir);
    nlohmann::json report = {
        {"command", "ablate"}, {"config", cfg.to_json()}, {"grid", grid.to_json()}, {"timing", grid.timing_json()}};
    write_text(cfg.out_dir / "report.json", dump(report));
    const std::string text = grid.render_text();
    write_text(cfg.out_dir / "report.txt", text + timing_text(report["timing"]));
    out << text << "artifacts in " << cfg.out_dir.string() << "\n";
    return kOk;
}

struct BenchArgs {
    fs::path checkpoint;
    std::string data;
    std::size_t batch_size = 1;
    std::size_t warmup = 10;
    std::size_t trials = 100;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    if (a.trials == 0) throw UsageFailure("--trials must be at least 1");
    if (a.batch_size == 0) throw UsageFailure("--batch-size must be at least 1");
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    auto model = ckpt.restore();
    const ModelConfig& c = model->config();
    ForecastBatch<float> batch;
    if (!a.data.empty()) {
        const RecordingTable table = load_recording(a.data, ckpt.data);
        const WindowedDataset data(table, ckpt.data, c.lookback, c.label_len, c.horizon, ckpt.normalization);
        const auto& starts = data.test_starts();
        if (starts.size() < a.batch_size) {
            throw DataError("only " + std::to_string(starts.size()) + " test windows for batch size " +
                            std::to_string(a.batch_size));
        }
        batch = data.batch<float>({starts.begin(), starts.begin() + static_cast<std::ptrdiff_t>(a.batch_size)});
    } else {
        // Fixed-seed standard-normal inputs in the Informer layout.
        Rng rng(0);
        batch.encoder_input = Tensor<float>::normal({a.batch_size, c.lookback, c.input_dim}, 0.0, 1.0, rng);
        batch.decoder_input = Tensor<float>::zeros({a.batch_size, c.decoder_length(), c.input_dim});
        for (std::size_t n = 0; n < a.batch_size; ++n) {
            for (std::size_t t = 0; t < c.label_len; ++t) {
                for (std::size_t f = 0; f < c.input_dim; ++f) {
                    batch.decoder_input.mutable_data()[(n * c.decoder_length() + t) * c.input_dim + f] =
                        batch.encoder_input.at({n, c.lookback - c.label_len + t, f});
                }
            }
        }
        batch.target_history = Tensor<float>::normal({a.batch_size, c.lookback, 1}, 0.0, 1.0, rng);
    }
    const TimingStats t = bench_inference(*model, batch, a.warmup, a.trials);
    out << display_name(c) << ", horizon " << c.horizon << " ms, batch " << a.batch_size << ", " << t.trials
        << " trials: mean " << format_metric(t.mean_ms, 3) << " ms, p50 " << format_metric(t.p50_ms, 3)
        << " ms, p95 " << format_metric(t.p95_ms, 3) << " ms\n";
    return kOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config file

RunConfigFile RunConfigFile::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("run config must be a JSON object");
    }
    RunConfigFile c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "data_path") c.data_path = value.get<std::string>();
            else if (key == "out_dir") c.out_dir = value.get<std::string>();
            else if (key == "workers") c.workers = value.get<std::size_t>();
            else if (key == "model") c.model = ModelConfig::from_json(value);
            else if (key == "train") c.train = TrainRunConfig::from_json(value);
            else if (key == "data") c.data = DataConfig::from_json(value);
            else if (key == "ablation_horizons") c.ablation_horizons = value.get<std::vector<std::size_t>>();
            else throw ConfigError("unknown run config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("run config key '" + key + "': " + e.what());
        }
    }
    if (c.workers == 0) {
        throw ConfigError("workers must be at least 1");
    }
    c.train.validate();
    c.data.validate();
    return c;
}

RunConfigFile RunConfigFile::load(const fs::path& path) {
    std::ifstream file(path);
    if (!file) {
        throw IoFailure("cannot read config '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(file);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    try {
        return from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

nlohmann::json RunConfigFile::to_json() const {
    nlohmann::json j = {{"out_dir", out_dir.string()},
                        {"workers", workers},
                        {"model", model.to_json()},
                        {"train", train.to_json()},
                        {"data", data.to_json()},
                        {"ablation_horizons", ablation_horizons}};
    if (data_path) {
        j["data_path"] = data_path->string();
    }
    return j;
}

// ---------------------------------------------------------------------------
// Dispatch

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"FocalGatedNet forecasting toolkit", "fgn"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic gait recording as CSV");
    synth_cmd->add_option("--out", synth.out, "Output CSV path")->required();
    synth_cmd->add_option("--cycles", synth.cycles, "Gait cycles of 1000 ms at 1000 Hz")->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise, "Noise std relative to channel amplitude")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Noise seed")->capture_default_str();

    auto add_common = [](CLI::App* cmd, CommonArgs& c) {
        cmd->add_option("--config", c.config, "Run config JSON");
        cmd->add_option("--data", c.data, "Recording CSV (overrides data_path)");
        cmd->add_option("--out", c.out, "Output directory (overrides out_dir)");
        cmd->add_option("--workers", c.workers, "Worker threads (overrides workers)");
    };

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train, checkpoint and score on the test split");
    add_common(train_cmd, train_args.common);
    train_cmd->add_option("--horizon", train_args.horizon, "Forecast horizon in ms");
    train_cmd->add_option("--variant", train_args.variant, "focalgatednet | transformer | dlinear | nlinear");
    train_cmd->add_option("--ablation", train_args.ablation, "glu_dcf | dcf_only | glu_only");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on the test split of a recording");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint.fgn")->required();
    eval_cmd->add_option("--data", eval_args.data, "Recording CSV")->required();
    eval_cmd->add_option("--out", eval_args.out, "Optional report directory");

    AblateArgs ablate_args;
    auto* ablate_cmd = app.add_subcommand("ablate", "Train the GLU/DCF ablation grid");
    add_common(ablate_cmd, ablate_args.common);
    ablate_cmd->add_option("--horizons", ablate_args.horizons, "Horizons in ms (overrides ablation_horizons)");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Time inference forward passes of a checkpoint");
    bench_cmd->add_option("--checkpoint", bench_args.checkpoint, "checkpoint.fgn")->required();
    bench_cmd->add_option("--data", bench_args.data, "Recording CSV; test windows are used as the batch");
    bench_cmd->add_option("--batch-size", bench_args.batch_size)->capture_default_str();
    bench_cmd->add_option("--warmup", bench_args.warmup)->capture_default_str();
    bench_cmd->add_option("--trials", bench_args.trials)->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*synth_cmd) return cmd_synth(synth, out);
        if (*train_cmd) return cmd_train(train_args, out);
        if (*eval_cmd) return cmd_eval(eval_args, out);
        if (*ablate_cmd) return cmd_ablate(ablate_args, out);
        if (*bench_cmd) return cmd_bench(bench_args, out);
    } catch (const UsageFailure& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kCheckpointError;
    } catch (const DivergenceError& e) {
        err << "divergence: " << e.what() << "\n";
        return kDivergence;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    }
    return kUsageError;
}

}  // namespace fgn::cli
