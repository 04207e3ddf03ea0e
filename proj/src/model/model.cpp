#include "fgn/model.hpp"

#include <algorithm>
#include <cmath>

namespace fgn {

template <typename T>
Forecaster<T>::Forecaster(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), init_rng_(seed), dropout_rng_(seed ^ 0xD1B54A32D192ED03ULL) {
    config_.validate();
}

template <typename T>
std::size_t Forecaster<T>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : parameters_) {
        total += p.tensor.numel();
    }
    return total;
}

template <typename T>
Tensor<T> Forecaster<T>::declare(std::string name, Tensor<T> value) {
    value.set_requires_grad(true);
    parameters_.push_back({std::move(name), value});
    return value;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
    Tensor<T> y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x) const {
    const Tensor<T> hidden = expand(x);
    return contract(activation == FfnActivation::relu ? relu(hidden) : gelu(hidden));
}

template <typename T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t d_model) {
    std::vector<T> table(length * d_model);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < d_model; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) * rate;
            table[pos * d_model + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
    return Tensor<T>({length, d_model}, std::move(table));
}

// ---------------------------------------------------------------------------
// Encoder-decoder

template <typename T>
EncoderDecoderForecaster<T>::EncoderDecoderForecaster(ModelConfig config, std::uint64_t seed)
    : Forecaster<T>(std::move(config), seed) {
    const ModelConfig& c = this->config_;
    attention_config_ = {c.d_model, c.heads, c.dropout_rate, c.mask_mode};
    glu_config_ = {c.d_model, c.glu_kernel, c.glu_causal};

    auto make_embedding = [&](const std::string& prefix, Linear<T>& dense, Tensor<T>& conv_w, Tensor<T>& conv_b) {
        // Embedding biases start random rather than zero: the zero-filled horizon placeholders would
        // otherwise embed to exact zero vectors, which DCF self-attention passes to LayerNorm unchanged.
        if (c.input_embedding == InputEmbedding::dense) {
            const T bound = T(1) / std::sqrt(static_cast<T>(c.input_dim));
            dense.weight = this->declare(prefix + ".embedding.weight",
                                         Tensor<T>::uniform({c.input_dim, c.d_model}, -bound, bound, this->init_rng()));
            dense.bias = this->declare(prefix + ".embedding.bias",
                                       Tensor<T>::uniform({c.d_model}, -bound, bound, this->init_rng()));
        } else {
            const T bound = T(1) / std::sqrt(static_cast<T>(3 * c.input_dim));
            conv_w = this->declare(prefix + ".embedding.conv_weight",
                                   Tensor<T>::uniform({3, c.input_dim, c.d_model}, -bound, bound, this->init_rng()));
            conv_b = this->declare(prefix + ".embedding.conv_bias",
                                   Tensor<T>::uniform({c.d_model}, -bound, bound, this->init_rng()));
        }
    };

    make_embedding("encoder", encoder_embedding_, encoder_conv_weight_, encoder_conv_bias_);
    for (std::size_t i = 0; i < c.n_encoder_layers; ++i) {
        const std::string prefix = "encoder.layers." + std::to_string(i);
        EncoderLayer layer;
        layer.attention = make_attention(prefix + ".attention");
        layer.attention_norm = make_norm(prefix + ".attention_norm");
        layer.ffn = make_ffn(prefix + ".ffn");
        layer.ffn_norm = make_norm(prefix + ".ffn_norm");
        encoder_layers_.push_back(std::move(layer));
    }

    make_embedding("decoder", decoder_embedding_, decoder_conv_weight_, decoder_conv_bias_);
    for (std::size_t i = 0; i < c.n_decoder_layers; ++i) {
        const std::string prefix = "decoder.layers." + std::to_string(i);
        DecoderLayer layer;
        layer.self_attention = make_attention(prefix + ".self_attention");
        layer.self_norm = make_norm(prefix + ".self_norm");
        layer.cross_attention = make_attention(prefix + ".cross_attention");
        layer.cross_norm = make_norm(prefix + ".cross_norm");
        if (c.uses_glu()) {
            layer.glu = GluWeights<T>::init(glu_config_, this->init_rng());
            layer.glu.gate_weight = this->declare(prefix + ".glu.gate_weight", layer.glu.gate_weight);
            layer.glu.gate_bias = this->declare(prefix + ".glu.gate_bias", layer.glu.gate_bias);
            layer.glu.linear_weight = this->declare(prefix + ".glu.linear_weight", layer.glu.linear_weight);
            layer.glu.linear_bias = this->declare(prefix + ".glu.linear_bias", layer.glu.linear_bias);
            layer.glu_norm = make_norm(prefix + ".glu_norm");
        }
        layer.ffn = make_ffn(prefix + ".ffn");
        layer.ffn_norm = make_norm(prefix + ".ffn_norm");
        decoder_layers_.push_back(std::move(layer));
    }
    projection_ = make_linear("projection", c.d_model, c.output_dim, true);
}

template <typename T>
Linear<T> EncoderDecoderForecaster<T>::make_linear(const std::string& name, std::size_t in, std::size_t out,
                                                   bool bias) {
    const T bound = T(1) / std::sqrt(static_cast<T>(in));
    Linear<T> linear;
    linear.weight = this->declare(name + ".weight", Tensor<T>::uniform({in, out}, -bound, bound, this->init_rng()));
    if (bias) {
        linear.bias = this->declare(name + ".bias", Tensor<T>::zeros({out}));
    }
    return linear;
}

template <typename T>
LayerNormParams<T> EncoderDecoderForecaster<T>::make_norm(const std::string& name) {
    const std::size_t d = this->config_.d_model;
    return {this->declare(name + ".gain", Tensor<T>::full({d}, T(1))),
            this->declare(name + ".offset", Tensor<T>::zeros({d}))};
}

template <typename T>
FeedForward<T> EncoderDecoderForecaster<T>::make_ffn(const std::string& name) {
    const ModelConfig& c = this->config_;
    FeedForward<T> ffn;
    ffn.expand = make_linear(name + ".expand", c.d_model, c.d_ff, true);
    ffn.contract = make_linear(name + ".contract", c.d_ff, c.d_model, true);
    ffn.activation = c.ffn_activation;
    return ffn;
}

template <typename T>
AttentionWeights<T> EncoderDecoderForecaster<T>::make_attention(const std::string& name) {
    AttentionWeights<T> w = AttentionWeights<T>::init(this->config_.d_model, this->init_rng());
    w.query = this->declare(name + ".query", w.query);
    w.key = this->declare(name + ".key", w.key);
    w.value = this->declare(name + ".value", w.value);
    w.output = this->declare(name + ".output", w.output);
    return w;
}

template <typename T>
Tensor<T> EncoderDecoderForecaster<T>::embed(const Tensor<T>& x, const Linear<T>& dense,
                                             const Tensor<T>& conv_weight, const Tensor<T>& conv_bias) const {
    const ModelConfig& c = this->config_;
    if (x.rank() != 3 || x.dim(2) != c.input_dim) {
        throw DimensionError("model input must be [B, L, " + std::to_string(c.input_dim) + "], got " +
                             shape_string(x.shape()));
    }
    Tensor<T> embedded = c.input_embedding == InputEmbedding::dense ? dense(x)
                                                                     : conv1d(x, conv_weight, conv_bias, true);
    if (c.positional_embedding == PositionalEmbedding::sinusoidal) {
        embedded = add(embedded, sinusoidal_positions<T>(x.dim(1), c.d_model));
    }
    return embedded;
}

template <typename T>
Tensor<T> EncoderDecoderForecaster<T>::residual(const Tensor<T>& x, const Tensor<T>& update,
                                                const LayerNormParams<T>& norm, bool training) {
    return norm(add(x, dropout(update, this->config_.dropout_rate, training, this->dropout_rng())));
}

template <typename T>
Tensor<T> EncoderDecoderForecaster<T>::encode(const Tensor<T>& encoder_input, bool training) {
    Tensor<T> h = embed(encoder_input, encoder_embedding_, encoder_conv_weight_, encoder_conv_bias_);
    for (const auto& layer : encoder_layers_) {
        h = residual(h, standard_mha(h, h, layer.attention, nullptr, attention_config_, training, this->dropout_rng()),
                     layer.attention_norm, training);
        h = residual(h, layer.ffn(h), layer.ffn_norm, training);
    }
    return h;
}

template <typename T>
Tensor<T> EncoderDecoderForecaster<T>::decode_sequence(const ForecastBatch<T>& batch, bool training) {
    const ModelConfig& c = this->config_;
    if (batch.decoder_input.rank() != 3 || batch.decoder_input.dim(1) != c.decoder_length()) {
        throw DimensionError("decoder input must have label_len + H = " + std::to_string(c.decoder_length()) +
                             " positions, got " + shape_string(batch.decoder_input.shape()));
    }
    const Tensor<T> memory = encode(batch.encoder_input, training);
    const std::size_t length = c.decoder_length();
    const AttentionMask causal = AttentionMask::causal(length);
    const bool dcf = c.uses_dcf();

    Tensor<T> h = embed(batch.decoder_input, decoder_embedding_, decoder_conv_weight_, decoder_conv_bias_);
    for (const auto& layer : decoder_layers_) {
        Tensor<T> self_out;
        Tensor<T> cross_out;
        if (dcf) {
            DcfOptions<T> self_opts{DcfRole::self_attention, &causal, &causal, nullptr};
            self_out = dcf_attention(h, h, layer.self_attention, attention_config_, training, this->dropout_rng(),
                                     self_opts);
        } else {
            self_out = standard_mha(h, h, layer.self_attention, &causal, attention_config_, training,
                                    this->dropout_rng());
        }
        h = residual(h, self_out, layer.self_norm, training);
        if (dcf) {
            DcfOptions<T> cross_opts{DcfRole::cross_attention, nullptr, &causal, nullptr};
            cross_out = dcf_attention(h, memory, layer.cross_attention, attention_config_, training,
                                      this->dropout_rng(), cross_opts);
        } else {
            cross_out = standard_mha(h, memory, layer.cross_attention, nullptr, attention_config_, training,
                                     this->dropout_rng());
        }
        h = residual(h, cross_out, layer.cross_norm, training);
        if (c.uses_glu()) {
            h = residual(h, glu_forward(h, layer.glu, glu_config_), layer.glu_norm, training);
        }
        h = residual(h, layer.ffn(h), layer.ffn_norm, training);
    }
    return projection_(h);
}

template <typename T>
Tensor<T> EncoderDecoderForecaster<T>::forward(const ForecastBatch<T>& batch, bool training) {
    const ModelConfig& c = this->config_;
    return slice(decode_sequence(batch, training), 1, c.label_len, c.horizon);
}

template <typename T>
std::vector<std::string> EncoderDecoderForecaster<T>::layer_inventory() const {
    const ModelConfig& c = this->config_;
    const std::string attention = c.uses_dcf() ? "dcf_attention" : "multi_head_attention";
    std::vector<std::string> inventory;
    inventory.push_back("encoder.embedding:" + to_string(c.input_embedding));
    for (std::size_t i = 0; i < encoder_layers_.size(); ++i) {
        const std::string p = "encoder.layers." + std::to_string(i);
        inventory.push_back(p + ".self_attention:multi_head_attention");
        inventory.push_back(p + ".ffn");
    }
    inventory.push_back("decoder.embedding:" + to_string(c.input_embedding));
    for (std::size_t i = 0; i < decoder_layers_.size(); ++i) {
        const std::string p = "decoder.layers." + std::to_string(i);
        inventory.push_back(p + ".self_attention:" + attention);
        inventory.push_back(p + ".cross_attention:" + attention);
        if (c.uses_glu()) {
            inventory.push_back(p + ".glu");
        }
        inventory.push_back(p + ".ffn");
    }
    inventory.push_back("projection");
    return inventory;
}

// ---------------------------------------------------------------------------
// Linear baselines

std::size_t effective_moving_average_window(std::size_t window, std::size_t length) {
    std::size_t w = std::min(window, length);
    if (w % 2 == 0) {
        --w;
    }
    return std::max<std::size_t>(w, 1);
}

template <typename T>
Decomposition<T> moving_average_decompose(const Tensor<T>& x, std::size_t window) {
    if (x.rank() != 3) {
        throw DimensionError("decomposition expects [B, L, C], got " + shape_string(x.shape()));
    }
    const std::size_t length = x.dim(1);
    const std::size_t w = effective_moving_average_window(window, length);
    const long long radius = static_cast<long long>(w / 2);
    // trend = x + mean over offsets of (shifted x - x). Differences vanish exactly on a
    // constant series, so its trend is the series itself with no rounding.
    Tensor<T> deviation;
    for (long long j = -radius; j <= radius; ++j) {
        if (j == 0) {
            continue;
        }
        // Row-selection matrix for offset j, replicating the edge samples.
        std::vector<T> selection(length * length, T(0));
        for (std::size_t t = 0; t < length; ++t) {
            const long long s = std::clamp<long long>(static_cast<long long>(t) + j, 0,
                                                      static_cast<long long>(length) - 1);
            selection[t * length + static_cast<std::size_t>(s)] = T(1);
        }
        const Tensor<T> diff = sub(matmul(Tensor<T>({length, length}, std::move(selection)), x), x);
        deviation = deviation.defined() ? add(deviation, diff) : diff;
    }
    Decomposition<T> parts;
    parts.trend = deviation.defined() ? add(x, scale(deviation, T(1) / static_cast<T>(w))) : x;
    parts.seasonal = sub(x, parts.trend);
    return parts;
}

template <typename T>
Tensor<T> temporal_linear(const Tensor<T>& x, const Linear<T>& map) {
    if (x.rank() != 3 || x.dim(1) != map.weight.dim(0)) {
        throw DimensionError("temporal linear map expects [B, " + std::to_string(map.weight.dim(0)) + ", C], got " +
                             shape_string(x.shape()));
    }
    return permute(map(permute(x, {0, 2, 1})), {0, 2, 1});
}

template <typename T>
Tensor<T> dlinear_forward(const Tensor<T>& x, const DLinearParams<T>& params) {
    const Decomposition<T> parts = moving_average_decompose(x, params.window);
    return add(temporal_linear(parts.trend, params.trend), temporal_linear(parts.seasonal, params.seasonal));
}

template <typename T>
Tensor<T> nlinear_forward(const Tensor<T>& x, const Linear<T>& map) {
    const Tensor<T> last = slice(x, 1, x.dim(1) - 1, 1);
    return add(temporal_linear(sub(x, last), map), last);
}

namespace {

template <typename T>
Linear<T> temporal_map(std::size_t lookback, std::size_t horizon, Rng& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(lookback));
    return {Tensor<T>::uniform({lookback, horizon}, -bound, bound, rng), Tensor<T>::zeros({horizon})};
}

template <typename T>
void check_history(const ForecastBatch<T>& batch, const ModelConfig& c) {
    if (!batch.target_history.defined() || batch.target_history.rank() != 3 ||
        batch.target_history.dim(1) != c.lookback || batch.target_history.dim(2) != c.output_dim) {
        throw DimensionError("linear baselines need target_history [B, " + std::to_string(c.lookback) + ", " +
                             std::to_string(c.output_dim) + "]");
    }
}

}  // namespace

template <typename T>
DLinearForecaster<T>::DLinearForecaster(ModelConfig config, std::uint64_t seed)
    : Forecaster<T>(std::move(config), seed) {
    const ModelConfig& c = this->config_;
    params_.window = c.moving_average_window;
    params_.trend = temporal_map<T>(c.lookback, c.horizon, this->init_rng());
    params_.seasonal = temporal_map<T>(c.lookback, c.horizon, this->init_rng());
    params_.trend.weight = this->declare("trend.weight", params_.trend.weight);
    params_.trend.bias = this->declare("trend.bias", params_.trend.bias);
    params_.seasonal.weight = this->declare("seasonal.weight", params_.seasonal.weight);
    params_.seasonal.bias = this->declare("seasonal.bias", params_.seasonal.bias);
}

template <typename T>
Tensor<T> DLinearForecaster<T>::forward(const ForecastBatch<T>& batch, bool) {
    check_history(batch, this->config_);
    return dlinear_forward(batch.target_history, params_);
}

template <typename T>
std::vector<std::string> DLinearForecaster<T>::layer_inventory() const {
    return {"decomposition:moving_average", "trend_linear", "seasonal_linear"};
}

template <typename T>
NLinearForecaster<T>::NLinearForecaster(ModelConfig config, std::uint64_t seed)
    : Forecaster<T>(std::move(config), seed) {
    const ModelConfig& c = this->config_;
    map_ = temporal_map<T>(c.lookback, c.horizon, this->init_rng());
    map_.weight = this->declare("linear.weight", map_.weight);
    map_.bias = this->declare("linear.bias", map_.bias);
}

template <typename T>
Tensor<T> NLinearForecaster<T>::forward(const ForecastBatch<T>& batch, bool) {
    check_history(batch, this->config_);
    return nlinear_forward(batch.target_history, map_);
}

template <typename T>
std::vector<std::string> NLinearForecaster<T>::layer_inventory() const {
    return {"subtract_last", "linear", "add_last"};
}

template <typename T>
std::unique_ptr<Forecaster<T>> build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    switch (config.variant) {
        case Variant::focalgatednet:
        case Variant::transformer:
            return std::make_unique<EncoderDecoderForecaster<T>>(config, seed);
        case Variant::dlinear:
            return std::make_unique<DLinearForecaster<T>>(config, seed);
        case Variant::nlinear:
            return std::make_unique<NLinearForecaster<T>>(config, seed);
    }
    throw ConfigError("unknown model variant");
}

#define FGN_INSTANTIATE(T)                                                                   \
    template class Forecaster<T>;                                                            \
    template struct Linear<T>;                                                               \
    template struct FeedForward<T>;                                                          \
    template Tensor<T> sinusoidal_positions<T>(std::size_t, std::size_t);                    \
    template class EncoderDecoderForecaster<T>;                                              \
    template Decomposition<T> moving_average_decompose<T>(const Tensor<T>&, std::size_t);    \
    template Tensor<T> temporal_linear<T>(const Tensor<T>&, const Linear<T>&);               \
    template Tensor<T> dlinear_forward<T>(const Tensor<T>&, const DLinearParams<T>&);        \
    template Tensor<T> nlinear_forward<T>(const Tensor<T>&, const Linear<T>&);               \
    template class DLinearForecaster<T>;                                                     \
    template class NLinearForecaster<T>;                                                     \
    template std::unique_ptr<Forecaster<T>> build_model<T>(const ModelConfig&, std::uint64_t);
FGN_INSTANTIATE(float)
FGN_INSTANTIATE(double)
#undef FGN_INSTANTIATE

}  // namespace fgn
