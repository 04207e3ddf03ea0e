#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "fgn/training.hpp"

namespace fgn {

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape()) {
        throw DimensionError("mse_loss shapes differ: " + shape_string(pred.shape()) + " vs " +
                             shape_string(target.shape()));
    }
    return mean(square(sub(pred, target)));
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> parameters, AdamConfig config)
    : parameters_(std::move(parameters)), config_(config) {
    for (const auto& p : parameters_) {
        first_.emplace_back(p.numel(), 0.0);
        second_.emplace_back(p.numel(), 0.0);
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& p : parameters_) {
        p.zero_grad();
    }
}

template <typename T>
void Adam<T>::step(double lr) {
    for (std::size_t i = 0; i < parameters_.size(); ++i) {
        if (!parameters_[i].has_grad()) {
            throw UsageError("Adam step: parameter " + std::to_string(i) + " has no gradient");
        }
    }
    ++steps_;
    const auto t = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < parameters_.size(); ++i) {
        auto values = parameters_[i].mutable_data();
        const auto grads = parameters_[i].grad();
        auto& m = first_[i];
        auto& v = second_[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = static_cast<double>(grads[j]);
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            values[j] = static_cast<T>(static_cast<double>(values[j]) - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon));
        }
    }
}

double lr_at_epoch(double base_lr, std::size_t epoch) {
    return std::ldexp(base_lr, -static_cast<int>(epoch));
}

bool EarlyStopping::update(double loss) {
    ++epochs_;
    if (loss < best_loss_) {
        best_loss_ = loss;
        best_epoch_ = epochs_;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

// ---------------------------------------------------------------------------
// Run configuration and trace

void TrainRunConfig::validate() const {
    if (max_epochs == 0) {
        throw ConfigError("max_epochs must be positive");
    }
    if (patience >= max_epochs) {
        throw ConfigError("patience (" + std::to_string(patience) + ") must be below max_epochs (" +
                          std::to_string(max_epochs) + ")");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (!(base_lr > 0.0)) {
        throw ConfigError("base_lr must be positive");
    }
    if (!(grad_clip >= 0.0)) {
        throw ConfigError("grad_clip must be non-negative");
    }
    if (restarts == 0) {
        throw ConfigError("restarts must be positive");
    }
}

nlohmann::json TrainRunConfig::to_json() const {
    return {{"max_epochs", max_epochs}, {"patience", patience},   {"batch_size", batch_size},
            {"seed", seed},             {"base_lr", base_lr},     {"grad_clip", grad_clip},
            {"restarts", restarts}};
}

TrainRunConfig TrainRunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("training config must be a JSON object");
    }
    TrainRunConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
            else if (key == "patience") c.patience = value.get<std::size_t>();
            else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "base_lr") c.base_lr = value.get<double>();
            else if (key == "grad_clip") c.grad_clip = value.get<double>();
            else if (key == "restarts") c.restarts = value.get<std::size_t>();
            else throw ConfigError("unknown training config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("training config key '" + key + "': " + e.what());
        }
    }
    return c;
}

nlohmann::json TrainTrace::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : epochs) {
        rows.push_back({{"epoch", e.epoch},
                        {"lr", e.lr},
                        {"train_loss", e.train_loss},
                        {"validation_loss", e.validation_loss},
                        {"improved", e.improved}});
    }
    return {{"epochs", rows},
            {"first_batch_loss", first_batch_loss},
            {"best_epoch", best_epoch},
            {"best_validation_loss", best_validation_loss},
            {"stopped_early", stopped_early}};
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

template <typename T>
std::vector<Tensor<T>> parameter_tensors(const Forecaster<T>& model) {
    std::vector<Tensor<T>> out;
    for (const auto& p : model.parameters()) {
        out.push_back(p.tensor);
    }
    return out;
}

template <typename T>
std::vector<std::vector<T>> snapshot(const Forecaster<T>& model) {
    std::vector<std::vector<T>> out;
    for (const auto& p : model.parameters()) {
        out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    }
    return out;
}

template <typename T>
void restore(Forecaster<T>& model, const std::vector<std::vector<T>>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        Tensor<T> handle = model.parameters()[i].tensor;
        std::copy(values[i].begin(), values[i].end(), handle.mutable_data().begin());
    }
}

template <typename T>
void clip_gradients(std::vector<Tensor<T>>& params, double max_norm) {
    double squares = 0.0;
    for (const auto& p : params) {
        for (T g : p.grad()) {
            squares += static_cast<double>(g) * static_cast<double>(g);
        }
    }
    const double norm = std::sqrt(squares);
    if (norm <= max_norm) {
        return;
    }
    const auto factor = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
        for (T& g : p.mutable_grad()) {
            g *= factor;
        }
    }
}

}  // namespace

template <typename T>
double mean_loss(Forecaster<T>& model, const WindowedDataset& data, const std::vector<std::size_t>& starts,
                 std::size_t batch_size) {
    if (starts.empty()) {
        throw DataError("cannot compute a loss over zero windows");
    }
    double total = 0.0;
    for (std::size_t begin = 0; begin < starts.size(); begin += batch_size) {
        const std::size_t end = std::min(starts.size(), begin + batch_size);
        const std::vector<std::size_t> chunk(starts.begin() + static_cast<std::ptrdiff_t>(begin),
                                             starts.begin() + static_cast<std::ptrdiff_t>(end));
        const ForecastBatch<T> batch = data.batch<T>(chunk);
        const double loss = static_cast<double>(mse_loss(model.forward(batch, false), batch.target).item());
        total += loss * static_cast<double>(end - begin);
    }
    return total / static_cast<double>(starts.size());
}

template <typename T>
TrainTrace train(Forecaster<T>& model, const WindowedDataset& data, const TrainRunConfig& run,
                 const std::function<void(const EpochRecord&)>& on_epoch) {
    run.validate();
    if (data.train_starts().empty()) {
        throw DataError("no training windows");
    }
    Rng rng(run.seed);
    Rng shuffle_rng = rng.fork();
    model.reseed_dropout(rng.next_u64());
    std::vector<Tensor<T>> params = parameter_tensors(model);
    Adam<T> adam(params);
    EarlyStopping stopping(run.patience);
    std::vector<std::vector<T>> best = snapshot(model);
    std::vector<std::size_t> order = data.train_starts();
    TrainTrace trace;

    for (std::size_t epoch = 0; epoch < run.max_epochs; ++epoch) {
        const double lr = lr_at_epoch(run.base_lr, epoch);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        }
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += run.batch_size) {
            const std::size_t end = std::min(order.size(), begin + run.batch_size);
            const std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                 order.begin() + static_cast<std::ptrdiff_t>(end));
            const ForecastBatch<T> batch = data.batch<T>(chunk);
            Tape<T> tape;
            TapeScope<T> scope(tape);
            const Tensor<T> loss = mse_loss(model.forward(batch, true), batch.target);
            const double value = static_cast<double>(loss.item());
            if (!std::isfinite(value)) {
                throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                                      ", batch " + std::to_string(batches));
            }
            if (epoch == 0 && batches == 0) {
                trace.first_batch_loss = value;
            }
            adam.zero_grad();
            tape.backward(loss);
            if (run.grad_clip > 0.0) {
                clip_gradients(params, run.grad_clip);
            }
            adam.step(lr);
            epoch_loss += value;
            ++batches;
        }

        EpochRecord record;
        record.epoch = epoch + 1;
        record.lr = lr;
        record.train_loss = epoch_loss / static_cast<double>(batches);
        record.validation_loss = data.validation_starts().empty()
                                     ? record.train_loss
                                     : mean_loss(model, data, data.validation_starts(), run.batch_size);
        if (!std::isfinite(record.validation_loss)) {
            throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
        }
        record.improved = stopping.update(record.validation_loss);
        if (record.improved) {
            best = snapshot(model);
        }
        trace.epochs.push_back(record);
        if (on_epoch) {
            on_epoch(record);
        }
        if (stopping.should_stop()) {
            trace.stopped_early = epoch + 1 < run.max_epochs;
            break;
        }
    }
    restore(model, best);
    trace.best_epoch = stopping.best_epoch();
    trace.best_validation_loss = stopping.best_loss();
    return trace;
}

#define FGN_INSTANTIATE(T)                                                                                       \
    template Tensor<T> mse_loss<T>(const Tensor<T>&, const Tensor<T>&);                                          \
    template class Adam<T>;                                                                                      \
    template double mean_loss<T>(Forecaster<T>&, const WindowedDataset&, const std::vector<std::size_t>&,        \
                                 std::size_t);                                                                   \
    template TrainTrace train<T>(Forecaster<T>&, const WindowedDataset&, const TrainRunConfig&,                 \
                                 const std::function<void(const EpochRecord&)>&);
FGN_INSTANTIATE(float)
FGN_INSTANTIATE(double)
#undef FGN_INSTANTIATE

}  // namespace fgn
