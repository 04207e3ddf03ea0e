#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fgn/data.hpp"

using namespace fgn;

namespace {

RecordingTable parse(const std::string& text, const CsvSchema& schema = {}) {
    std::istringstream in(text);
    return parse_csv(in, schema, "test.csv");
}

std::string error_of(const std::string& text, const CsvSchema& schema = {}) {
    try {
        parse(text, schema);
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

RecordingTable ramp_table(std::size_t rows) {
    RecordingTable t;
    std::vector<double> a(rows), b(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        t.time_ms.push_back(static_cast<double>(r));
        a[r] = std::sin(0.1 * static_cast<double>(r));
        b[r] = static_cast<double>(r % 7);
    }
    t.add_column("feature", std::move(a));
    t.add_column("knee_angle", std::move(b));
    return t;
}

}  // namespace

TEST(CsvTest, ParsesWellFormedFile) {
    const auto t = parse("time_ms,a,b\n0,1,2\n1,3,4\n2,5,6\n");
    EXPECT_EQ(t.rows(), 3u);
    EXPECT_EQ(t.channel_count(), 2u);
    EXPECT_EQ(t.column("b")[2], 6.0);
    EXPECT_EQ(t.time_ms[1], 1.0);
}

TEST(CsvTest, TimeGoingBackwardsNamesRow) {
    const std::string message = error_of("time_ms,a\n5,1\n3,1\n8,1\n");
    EXPECT_NE(message.find("row 2"), std::string::npos) << message;
    EXPECT_NE(error_of("time_ms,a\n5,1\n5,1\n").find("row 2"), std::string::npos);
}

TEST(CsvTest, MissingColumns) {
    EXPECT_NE(error_of("t,a\n0,1\n").find("missing time column 'time_ms'"), std::string::npos);
    CsvSchema schema;
    schema.required = {"knee_angle"};
    EXPECT_NE(error_of("time_ms,a\n0,1\n", schema).find("missing column 'knee_angle'"), std::string::npos);
}

TEST(CsvTest, RaggedRow) {
    const std::string message = error_of("time_ms,a,b\n0,1,2\n1,3\n");
    EXPECT_NE(message.find("row 2 has 2 fields, header has 3"), std::string::npos) << message;
}

TEST(CsvTest, NonNumericCellNamesLocation) {
    const std::string message = error_of("time_ms,a,b\n0,1,2\n1,3,4\n2,x5,6\n");
    EXPECT_NE(message.find("row 3, column 'a'"), std::string::npos) << message;
    EXPECT_NE(error_of("time_ms,a\n0,\n").find("row 1, column 'a'"), std::string::npos);
    EXPECT_NE(error_of("time_ms,a\n0,nan\n").find("not a number"), std::string::npos);
}

TEST(CsvTest, ToleratesCarriageReturnsAndSpaces) {
    const auto t = parse("time_ms, a\r\n0, 1.5\r\n1,2\r\n");
    EXPECT_EQ(t.column("a")[0], 1.5);
}

TEST(CsvTest, WriteThenLoadIsExact) {
    auto t = synth_gait({2, 1000.0, 1000.0, 0.05, 3});
    const auto path = std::filesystem::temp_directory_path() / "fgn_data_test_roundtrip.csv";
    write_csv(path, t);
    CsvSchema schema;
    schema.required = {"knee_angle"};
    const auto back = load_csv(path, schema);
    std::filesystem::remove(path);
    EXPECT_EQ(back.channel_count(), 41u);
    EXPECT_EQ(back.time_ms, t.time_ms);
    EXPECT_EQ(back.names, t.names);
    EXPECT_EQ(back.columns, t.columns);
}

TEST(CsvTest, MissingFile) {
    EXPECT_THROW(load_csv("/nonexistent/fgn.csv"), DataError);
}

TEST(ResampleTest, LinearInterpolationExample) {
    RecordingTable t;
    t.time_ms = {0.0, 5.0};
    t.add_column("v", {0.0, 10.0});
    const auto out = resample_linear(t, 1000.0);
    ASSERT_EQ(out.rows(), 6u);
    EXPECT_DOUBLE_EQ(out.column("v")[1], 2.0);
    EXPECT_DOUBLE_EQ(out.column("v")[5], 10.0);
}

TEST(ResampleTest, ConstantAndAffineSignals) {
    RecordingTable t;
    for (int r = 0; r < 50; ++r) {
        t.time_ms.push_back(5.0 * r);
    }
    std::vector<double> constant(50, 3.25), line(50);
    for (int r = 0; r < 50; ++r) {
        line[static_cast<std::size_t>(r)] = -2.0 + 0.375 * t.time_ms[static_cast<std::size_t>(r)];
    }
    t.add_column("constant", constant);
    t.add_column("line", line);
    const auto out = resample_linear(t, 1000.0);
    EXPECT_EQ(out.rows(), 246u);
    for (std::size_t k = 0; k < out.rows(); ++k) {
        EXPECT_EQ(out.column("constant")[k], 3.25);
        EXPECT_NEAR(out.column("line")[k], -2.0 + 0.375 * out.time_ms[k], 1e-12);
    }
}

TEST(ResampleTest, SineUpsampledWithinOnePercent) {
    // 5 Hz sine sampled at 200 Hz for one second.
    const double amplitude = 2.0;
    RecordingTable t;
    std::vector<double> v;
    for (int r = 0; r < 200; ++r) {
        const double ms = 5.0 * r;
        t.time_ms.push_back(ms);
        v.push_back(amplitude * std::sin(2.0 * std::numbers::pi * 5.0 * ms / 1000.0));
    }
    t.add_column("s", v);
    const auto out = resample_linear(t, 1000.0);
    double worst = 0.0;
    for (std::size_t k = 0; k < out.rows(); ++k) {
        const double truth = amplitude * std::sin(2.0 * std::numbers::pi * 5.0 * out.time_ms[k] / 1000.0);
        worst = std::max(worst, std::abs(out.column("s")[k] - truth));
    }
    EXPECT_LT(worst, 0.01 * amplitude);
}

TEST(ResampleTest, Errors) {
    EXPECT_THROW(resample_linear(RecordingTable{}, 1000.0), DataError);
    RecordingTable t;
    t.time_ms = {0.0, 1.0, 2.0};
    t.add_column("v", {1, 2, 3});
    EXPECT_THROW(resample_linear(t, 200.0), ConfigError);
}

TEST(ResampleTest, AlignJoinsRates) {
    RecordingTable emg, imu;
    for (int r = 0; r < 100; ++r) {
        emg.time_ms.push_back(r);
    }
    emg.add_column("emg", std::vector<double>(100, 1.0));
    for (int r = 0; r < 20; ++r) {
        imu.time_ms.push_back(5.0 * r);
    }
    std::vector<double> ramp(20);
    for (int r = 0; r < 20; ++r) {
        ramp[static_cast<std::size_t>(r)] = r;
    }
    imu.add_column("imu", ramp);
    const auto aligned = align_tables({emg, imu}, 1000.0);
    EXPECT_EQ(aligned.rows(), 96u);
    EXPECT_EQ(aligned.channel_count(), 2u);
    EXPECT_DOUBLE_EQ(aligned.column("imu")[7], 1.4);
}

TEST(NormalizeTest, HandExample) {
    RecordingTable t;
    t.time_ms = {0, 1, 2};
    t.add_column("x", {1, 2, 3});
    const auto stats = NormalizationStats::fit(t, {"x"}, 0, 3);
    EXPECT_DOUBLE_EQ(stats.mean[0], 2.0);
    EXPECT_NEAR(stats.std[0], 0.81650, 1e-5);
    const auto normalized = stats.apply(t);
    EXPECT_NEAR(normalized.column("x")[0], -1.22474, 1e-5);
    EXPECT_DOUBLE_EQ(normalized.column("x")[1], 0.0);
    EXPECT_NEAR(normalized.column("x")[2], 1.22474, 1e-5);
}

TEST(NormalizeTest, ZeroVarianceIsNamedError) {
    RecordingTable t;
    t.time_ms = {0, 1, 2};
    t.add_column("flat", {4, 4, 4});
    try {
        NormalizationStats::fit(t, {"flat"}, 0, 3);
        FAIL() << "expected ZeroVarianceError";
    } catch (const ZeroVarianceError& e) {
        EXPECT_NE(std::string(e.what()).find("'flat'"), std::string::npos);
    }
}

TEST(NormalizeTest, TrainingRowsStandardizedAndRoundTrip) {
    const auto t = synth_gait({3, 1000.0, 1000.0, 0.05, 5});
    const auto stats = NormalizationStats::fit(t, t.names, 0, 2400);
    const auto normalized = stats.apply(t);
    for (const auto& name : t.names) {
        const auto& c = normalized.column(name);
        double mean = 0.0, squares = 0.0;
        for (std::size_t r = 0; r < 2400; ++r) {
            mean += c[r];
        }
        mean /= 2400.0;
        for (std::size_t r = 0; r < 2400; ++r) {
            squares += (c[r] - mean) * (c[r] - mean);
        }
        EXPECT_LT(std::abs(mean), 1e-6) << name;
        EXPECT_LT(std::abs(std::sqrt(squares / 2400.0) - 1.0), 1e-6) << name;
    }
    const auto back = stats.invert(normalized);
    for (std::size_t c = 0; c < t.channel_count(); ++c) {
        for (std::size_t r = 0; r < t.rows(); ++r) {
            EXPECT_NEAR(back.columns[c][r], t.columns[c][r], 1e-6);
        }
    }
}

TEST(WindowTest, CountExamples) {
    EXPECT_EQ(window_count(10, 4, 2, 1), 5u);
    EXPECT_EQ(window_count(6, 4, 2, 1), 1u);
    EXPECT_EQ(window_count(5, 4, 2, 1), 0u);
    EXPECT_THROW(window_count(10, 4, 2, 0), ConfigError);
}

TEST(WindowTest, CountFormulaSweep) {
    for (std::size_t len = 1; len < 40; ++len) {
        for (std::size_t lookback = 1; lookback < 8; ++lookback) {
            for (std::size_t horizon = 1; horizon < 5; ++horizon) {
                for (std::size_t stride = 1; stride < 5; ++stride) {
                    // Brute force: count start offsets whose window fits.
                    std::size_t expected = 0;
                    for (std::size_t s = 0; s + lookback + horizon <= len; s += stride) {
                        ++expected;
                    }
                    EXPECT_EQ(window_count(len, lookback, horizon, stride), expected);
                    const auto starts = window_starts(3, 3 + len, lookback, horizon, stride);
                    ASSERT_EQ(starts.size(), expected);
                    for (std::size_t s : starts) {
                        EXPECT_LE(s + lookback + horizon, 3 + len);
                    }
                }
            }
        }
    }
}

TEST(WindowTest, SplitNeverStraddlesBoundary) {
    const auto t = ramp_table(1000);
    DataConfig data;
    data.train_stride = 3;
    const WindowedDataset ds(t, data, 16, 8, 4);
    EXPECT_EQ(ds.bounds().test_begin, 800u);
    EXPECT_EQ(ds.bounds().validation_begin, 720u);
    for (std::size_t s : ds.test_starts()) {
        EXPECT_GE(s, 800u);
    }
    for (std::size_t s : ds.train_starts()) {
        EXPECT_LE(s + 20, 720u);
    }
    for (std::size_t s : ds.validation_starts()) {
        EXPECT_GE(s, 720u);
        EXPECT_LE(s + 20, 800u);
    }
    EXPECT_EQ(ds.test_starts().size(), window_count(200, 16, 4, 1));
    EXPECT_EQ(ds.train_starts().size(), window_count(720, 16, 4, 3));
    EXPECT_EQ(ds.validation_starts().size(), window_count(80, 16, 4, 1));
}

TEST(WindowTest, StatisticsIgnoreTestRows) {
    auto t = ramp_table(500);
    const WindowedDataset base(t, DataConfig{}, 8, 4, 2);
    for (std::size_t r = 400; r < 500; ++r) {
        t.columns[0][r] = 1e6;
        t.columns[1][r] = -1e6;
    }
    const WindowedDataset changed(t, DataConfig{}, 8, 4, 2);
    EXPECT_EQ(base.stats(), changed.stats());
}

TEST(WindowTest, BatchLayout) {
    const auto t = ramp_table(200);
    const WindowedDataset ds(t, DataConfig{}, 8, 3, 4);
    const std::vector<std::size_t> starts = {10, 50};
    const auto batch = ds.batch<double>(starts);
    EXPECT_EQ(batch.encoder_input.shape(), (Shape{2, 8, 1}));
    EXPECT_EQ(batch.decoder_input.shape(), (Shape{2, 7, 1}));
    EXPECT_EQ(batch.target.shape(), (Shape{2, 4, 1}));
    EXPECT_EQ(batch.target_history.shape(), (Shape{2, 8, 1}));
    const auto& stats = ds.stats();
    const std::size_t fi = stats.index_of("feature");
    const std::size_t ti = stats.index_of("knee_angle");
    for (std::size_t n = 0; n < 2; ++n) {
        const std::size_t s = starts[n];
        for (std::size_t l = 0; l < 8; ++l) {
            EXPECT_DOUBLE_EQ(batch.encoder_input.at({n, l, 0}), stats.normalize(fi, t.columns[0][s + l]));
            EXPECT_DOUBLE_EQ(batch.target_history.at({n, l, 0}), stats.normalize(ti, t.columns[1][s + l]));
        }
        for (std::size_t l = 0; l < 3; ++l) {
            EXPECT_EQ(batch.decoder_input.at({n, l, 0}), batch.encoder_input.at({n, 5 + l, 0}));
        }
        for (std::size_t l = 3; l < 7; ++l) {
            EXPECT_EQ(batch.decoder_input.at({n, l, 0}), 0.0);
        }
        for (std::size_t h = 0; h < 4; ++h) {
            EXPECT_DOUBLE_EQ(batch.target.at({n, h, 0}), stats.normalize(ti, t.columns[1][s + 8 + h]));
            EXPECT_DOUBLE_EQ(ds.denormalize_target(batch.target.at({n, h, 0})), t.columns[1][s + 8 + h]);
        }
    }
    const auto raw = ds.raw_targets(starts);
    EXPECT_EQ(raw[4 + 1], t.columns[1][50 + 8 + 1]);
}

TEST(WindowTest, TooShortAndBadConfig) {
    EXPECT_THROW(WindowedDataset(ramp_table(30), DataConfig{}, 16, 8, 4), DataError);
    DataConfig bad;
    bad.train_fraction = 1.0;
    EXPECT_THROW(WindowedDataset(ramp_table(300), bad, 8, 4, 2), ConfigError);
    DataConfig missing;
    missing.target = "absent";
    EXPECT_THROW(WindowedDataset(ramp_table(300), missing, 8, 4, 2), DataError);
}

TEST(WindowTest, FeatureSelection) {
    const auto t = synth_gait({2, 1000.0, 1000.0, 0.05, 1});
    const WindowedDataset all(t, DataConfig{}, 8, 4, 2);
    EXPECT_EQ(all.input_dim(), 40u);
    DataConfig data;
    data.exclude_features = {"gon_knee_sagittal"};
    const WindowedDataset without(t, data, 8, 4, 2);
    EXPECT_EQ(without.input_dim(), 39u);
    data.exclude_features = {"nope"};
    EXPECT_THROW(WindowedDataset(t, data, 8, 4, 2), DataError);
}

TEST(WindowTest, DisabledNormalizationKeepsRawValues) {
    auto t = ramp_table(200);
    t.columns[1].assign(200, 7.0);  // constant target
    EXPECT_THROW(WindowedDataset(t, DataConfig{}, 8, 4, 2), ZeroVarianceError);
    DataConfig data;
    data.normalize = false;
    const WindowedDataset ds(t, data, 8, 4, 2);
    EXPECT_EQ(ds.batch<double>({0}).target.at({0, 0, 0}), 7.0);
}

TEST(DataConfigTest, JsonRoundTripAndUnknownKeys) {
    DataConfig c;
    c.exclude_features = {"a"};
    c.eval_stride = 4;
    EXPECT_EQ(DataConfig::from_json(c.to_json()), c);
    EXPECT_THROW(DataConfig::from_json(nlohmann::json{{"strid", 1}}), ConfigError);
}

TEST(SynthTest, ShapeAndNames) {
    const auto t = synth_gait({10, 1000.0, 1000.0, 0.05, 1});
    EXPECT_EQ(t.rows(), 10000u);
    EXPECT_EQ(t.channel_count(), 41u);
    EXPECT_EQ(t.names.back(), "knee_angle");
    EXPECT_EQ(t.time_ms[1] - t.time_ms[0], 1.0);
    EXPECT_THROW(synth_gait({0, 1000.0, 1000.0, 0.05, 1}), ConfigError);
}

TEST(SynthTest, NoiselessKneeStartsAtAnalyticValue) {
    const auto t = synth_gait({1, 1000.0, 1000.0, 0.0, 9});
    const double expected = 47.5 + 28.3 * std::cos(4.09) + 14.5 * std::cos(4.63) + 5.3 * std::cos(5.94);
    EXPECT_NEAR(t.column("knee_angle")[0], expected, 1e-12);
    // Noiseless runs do not depend on the seed.
    EXPECT_EQ(t.columns, synth_gait({1, 1000.0, 1000.0, 0.0, 10}).columns);
}

TEST(SynthTest, KneeSpansGaitRange) {
    const auto t = synth_gait({1, 1000.0, 1000.0, 0.0, 0});
    const auto& knee = t.column("knee_angle");
    const auto [lo, hi] = std::minmax_element(knee.begin(), knee.end());
    EXPECT_GT(*lo, -2.0);
    EXPECT_LT(*lo, 5.0);
    EXPECT_GT(*hi, 65.0);
    EXPECT_LT(*hi, 75.0);
}

TEST(SynthTest, SameSeedIsBitIdentical) {
    const auto a = synth_gait({3, 1000.0, 1000.0, 0.05, 42});
    const auto b = synth_gait({3, 1000.0, 1000.0, 0.05, 42});
    const auto c = synth_gait({3, 1000.0, 1000.0, 0.05, 43});
    EXPECT_EQ(a.columns, b.columns);
    EXPECT_NE(a.columns, c.columns);
}

TEST(SynthTest, AutocorrelationPeriodIsCycleLength) {
    const auto t = synth_gait({8, 1000.0, 1000.0, 0.05, 4});
    const auto& knee = t.column("knee_angle");
    double mean = 0.0;
    for (double v : knee) {
        mean += v;
    }
    mean /= static_cast<double>(knee.size());
    std::size_t best_lag = 0;
    double best = -1e300;
    for (std::size_t lag = 500; lag <= 1500; ++lag) {
        double acc = 0.0;
        for (std::size_t r = 0; r + lag < knee.size(); ++r) {
            acc += (knee[r] - mean) * (knee[r + lag] - mean);
        }
        acc /= static_cast<double>(knee.size() - lag);
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    EXPECT_NEAR(static_cast<double>(best_lag), 1000.0, 1.0);
}
