#include <array>
#include <cmath>
#include <numbers>

#include "fgn/data.hpp"
#include "fgn/random.hpp"

namespace fgn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Fixed seed for the channel shapes, so every run shares one sensor layout.
constexpr std::uint64_t kLayoutSeed = 0x6A17C0DEULL;
// Mean-reversion time of the knee deviation, in milliseconds.
constexpr double kDriftTimeConstantMs = 250.0;
// Stationary std of the knee deviation per unit of noise_std, in degrees.
constexpr double kDriftDegreesPerNoise = 40.0;

struct Harmonics {
    std::array<double, 3> amplitude{};
    std::array<double, 3> phase{};

    double operator()(double phi) const {
        double v = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            v += amplitude[k] * std::cos(static_cast<double>(k + 1) * phi - phase[k]);
        }
        return v;
    }
};

Harmonics random_harmonics(Rng& rng, double scale) {
    Harmonics h;
    for (std::size_t k = 0; k < 3; ++k) {
        h.amplitude[k] = scale * rng.uniform(0.2, 1.0) / static_cast<double>(k + 1);
        h.phase[k] = rng.uniform(0.0, kTwoPi);
    }
    return h;
}

}  // namespace

double knee_angle_profile(double phase) {
    return 47.5 + 28.3 * std::cos(phase - 4.09) + 14.5 * std::cos(2.0 * phase - 4.63) +
           5.3 * std::cos(3.0 * phase - 5.94);
}

RecordingTable synth_gait(const SynthGaitOptions& options) {
    if (options.cycles < 1) {
        throw ConfigError("synth_gait needs at least one cycle");
    }
    if (!(options.cycle_ms > 0.0) || !(options.rate_hz > 0.0)) {
        throw ConfigError("cycle length and sample rate must be positive");
    }
    if (!(options.noise_std >= 0.0)) {
        throw ConfigError("noise_std must be non-negative");
    }
    const double step_ms = 1000.0 / options.rate_hz;
    const auto rows = static_cast<std::size_t>(
        std::llround(static_cast<double>(options.cycles) * options.cycle_ms / step_ms));

    RecordingTable table;
    table.time_ms.resize(rows);
    std::vector<double> phase(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        table.time_ms[r] = static_cast<double>(r) * step_ms;
        phase[r] = kTwoPi * std::fmod(table.time_ms[r], options.cycle_ms) / options.cycle_ms;
    }

    Rng noise(options.seed);
    Rng drift_rng = noise.fork();

    // Knee target: harmonic profile plus an Ornstein-Uhlenbeck deviation started at zero.
    std::vector<double> knee(rows);
    const double decay = std::exp(-step_ms / kDriftTimeConstantMs);
    const double drift_std = kDriftDegreesPerNoise * options.noise_std;
    const double innovation = drift_std * std::sqrt(1.0 - decay * decay);
    double drift = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        knee[r] = knee_angle_profile(phase[r]) + drift;
        drift = decay * drift + innovation * drift_rng.normal();
    }

    Rng layout(kLayoutSeed);
    auto add_channel = [&](const std::string& name, auto&& clean, double amplitude, bool rectify) {
        std::vector<double> values(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const double v = clean(r) + options.noise_std * amplitude * noise.normal();
            values[r] = rectify ? std::abs(v) : v;
        }
        table.add_column(name, std::move(values));
    };

    // EMG envelopes: rectified bursts locked to gait phase.
    const std::array<const char*, 11> muscles = {"rf", "vl", "vm", "bf", "st", "ta", "gl", "gm", "sol", "gmax", "gmed"};
    for (const char* muscle : muscles) {
        const double onset = layout.uniform(0.0, kTwoPi);
        const double secondary = layout.uniform(0.0, kTwoPi);
        const double weight = layout.uniform(0.1, 0.5);
        add_channel(std::string("emg_") + muscle,
                    [&, onset, secondary, weight](std::size_t r) {
                        const double main = std::max(0.0, std::cos(phase[r] - onset));
                        const double minor = std::max(0.0, std::cos(2.0 * phase[r] - secondary));
                        return main * main + weight * minor;
                    },
                    1.0, true);
    }

    // IMU: accelerometer and gyroscope axes on four segments.
    const std::array<const char*, 4> segments = {"pelvis", "thigh", "shank", "foot"};
    const std::array<const char*, 6> axes = {"acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z"};
    for (const char* segment : segments) {
        for (const char* axis : axes) {
            const Harmonics shape = random_harmonics(layout, 1.0);
            add_channel(std::string("imu_") + segment + "_" + axis, [&, shape](std::size_t r) { return shape(phase[r]); },
                        1.0, false);
        }
    }

    // Goniometers. The sagittal knee channel measures the target itself.
    add_channel("gon_knee_sagittal", [&](std::size_t r) { return knee[r]; }, 35.0, false);
    for (const char* joint : {"gon_knee_frontal", "gon_ankle_sagittal", "gon_ankle_frontal", "gon_hip_sagittal"}) {
        const Harmonics shape = random_harmonics(layout, 20.0);
        add_channel(joint, [&, shape](std::size_t r) { return shape(phase[r]); }, 20.0, false);
    }

    table.add_column("knee_angle", std::move(knee));
    return table;
}

}  // namespace fgn
