#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fgn/data.hpp"
#include "fgn/model.hpp"

namespace fgn {

/// Mean of squared differences over all elements.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are kept in double for every parameter precision.
template <typename T>
class Adam {
public:
    explicit Adam(std::vector<Tensor<T>> parameters, AdamConfig config = {});

    /// Applies one update from the accumulated gradients. UsageError if a parameter has none.
    void step(double lr);
    void zero_grad();
    std::uint64_t steps() const { return steps_; }
    const std::vector<std::vector<double>>& first_moments() const { return first_; }
    const std::vector<std::vector<double>>& second_moments() const { return second_; }

private:
    std::vector<Tensor<T>> parameters_;
    AdamConfig config_;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
    std::uint64_t steps_ = 0;
};

/// base_lr / 2^epoch, epoch counted from 0.
double lr_at_epoch(double base_lr, std::size_t epoch);

/// Tracks the best validation loss; epochs are numbered from 1.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    /// Records one epoch's loss; returns true when it is a new best.
    bool update(double loss);
    bool should_stop() const { return since_best_ >= patience_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }
    std::size_t epochs_seen() const { return epochs_; }

private:
    std::size_t patience_;
    std::size_t epochs_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

struct TrainRunConfig {
    std::size_t max_epochs = 10;
    std::size_t patience = 3;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double base_lr = 1e-4;
    /// Global gradient-norm clip; 0 disables clipping.
    double grad_clip = 0.0;
    /// Independent seeded runs over the same splits.
    std::size_t restarts = 1;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainRunConfig from_json(const nlohmann::json& j);
    bool operator==(const TrainRunConfig&) const = default;
};

struct EpochRecord {
    std::size_t epoch = 0;  // from 1
    double lr = 0.0;
    double train_loss = 0.0;       // mean over the epoch's batches
    double validation_loss = 0.0;  // mean over validation windows
    bool improved = false;
};

struct TrainTrace {
    std::vector<EpochRecord> epochs;
    double first_batch_loss = 0.0;
    std::size_t best_epoch = 0;
    double best_validation_loss = 0.0;
    bool stopped_early = false;

    nlohmann::json to_json() const;
};

/// Mean MSE of the model over the given windows, without dropout.
template <typename T>
double mean_loss(Forecaster<T>& model, const WindowedDataset& data, const std::vector<std::size_t>& starts,
                 std::size_t batch_size);

/**
 * Trains with Adam and the halving schedule, shuffling training windows each
 * epoch. The model ends holding the parameters of its best validation epoch.
 * Without validation windows the training loss drives early stopping.
 */
template <typename T>
TrainTrace train(Forecaster<T>& model, const WindowedDataset& data, const TrainRunConfig& run,
                 const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Model, data settings and statistics needed to rebuild a trained forecaster.
struct Checkpoint {
    ModelConfig model;
    DataConfig data;
    NormalizationStats normalization;
    std::vector<float> values;  // parameters in declaration order

    /// Builds the model and loads the stored values.
    std::unique_ptr<Forecaster<float>> restore() const;
};

Checkpoint make_checkpoint(const Forecaster<float>& model, const DataConfig& data,
                           const NormalizationStats& normalization);
/// "FGN1", u64 LE JSON length, JSON header, float32 LE values, u64 LE value count.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace fgn
