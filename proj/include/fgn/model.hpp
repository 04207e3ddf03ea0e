#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fgn/attention.hpp"
#include "fgn/glu.hpp"
#include "fgn/tensor.hpp"

namespace fgn {

enum class Variant { focalgatednet, transformer, dlinear, nlinear };
enum class Ablation { glu_dcf, dcf_only, glu_only };
enum class PositionalEmbedding { none, sinusoidal };
enum class InputEmbedding { dense, conv };
enum class FfnActivation { relu, gelu };

std::string to_string(Variant v);
std::string to_string(Ablation a);
std::string to_string(PositionalEmbedding p);
std::string to_string(InputEmbedding e);
std::string to_string(FfnActivation a);
Variant parse_variant(const std::string& text);
Ablation parse_ablation(const std::string& text);
PositionalEmbedding parse_positional_embedding(const std::string& text);
InputEmbedding parse_input_embedding(const std::string& text);
FfnActivation parse_ffn_activation(const std::string& text);

/// Architecture hyperparameters. Sequence lengths are in samples (1 sample = 1 ms).
struct ModelConfig {
    std::size_t n_encoder_layers = 3;
    std::size_t n_decoder_layers = 2;
    std::size_t d_model = 512;
    std::size_t d_ff = 2048;
    std::size_t heads = 8;
    double dropout_rate = 0.05;
    std::size_t glu_kernel = 3;
    bool glu_causal = true;
    std::size_t lookback = 128;
    std::size_t label_len = 64;
    std::size_t horizon = 20;
    std::size_t input_dim = 40;
    std::size_t output_dim = 1;
    PositionalEmbedding positional_embedding = PositionalEmbedding::none;
    InputEmbedding input_embedding = InputEmbedding::dense;
    Variant variant = Variant::focalgatednet;
    Ablation ablation = Ablation::glu_dcf;
    MaskMode mask_mode = MaskMode::pre_softmax_additive;
    FfnActivation ffn_activation = FfnActivation::relu;
    std::size_t moving_average_window = 25;

    /// Small configuration used by tests and desk-scale experiments.
    static ModelConfig toy();

    void validate() const;
    std::size_t decoder_length() const { return label_len + horizon; }
    bool uses_dcf() const;
    bool uses_glu() const;

    nlohmann::json to_json() const;
    /// Unknown keys are rejected; missing keys keep their defaults.
    static ModelConfig from_json(const nlohmann::json& j);

    bool operator==(const ModelConfig&) const = default;
};

/**
 * One mini-batch in Informer-style layout.
 *
 * decoder_input holds the last label_len encoder rows followed by horizon
 * zero rows. target_history is the normalized target over the lookback
 * window; the univariate linear baselines read it.
 */
template <typename T>
struct ForecastBatch {
    Tensor<T> encoder_input;   // [B, L_in, input_dim]
    Tensor<T> decoder_input;   // [B, label_len + H, input_dim]
    Tensor<T> target;          // [B, H, output_dim]
    Tensor<T> target_history;  // [B, L_in, output_dim]

    std::size_t size() const { return encoder_input.dim(0); }
};

template <typename T>
struct NamedParameter {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
class Forecaster {
public:
    Forecaster(ModelConfig config, std::uint64_t seed);
    virtual ~Forecaster() = default;
    Forecaster(const Forecaster&) = delete;
    Forecaster& operator=(const Forecaster&) = delete;

    /// Forecast [B, H, output_dim]. Training mode enables dropout.
    virtual Tensor<T> forward(const ForecastBatch<T>& batch, bool training) = 0;
    /// Human-readable list of sublayers, in execution order.
    virtual std::vector<std::string> layer_inventory() const = 0;

    const ModelConfig& config() const { return config_; }
    /// Parameters in their fixed declaration order (checkpoint order).
    const std::vector<NamedParameter<T>>& parameters() const { return parameters_; }
    std::size_t parameter_count() const;
    void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

protected:
    Tensor<T> declare(std::string name, Tensor<T> value);
    Rng& init_rng() { return init_rng_; }
    Rng& dropout_rng() { return dropout_rng_; }

    ModelConfig config_;

private:
    std::vector<NamedParameter<T>> parameters_;
    Rng init_rng_;
    Rng dropout_rng_;
};

template <typename T>
struct Linear {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out] or undefined

    Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNormParams {
    Tensor<T> gain;
    Tensor<T> offset;

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, offset); }
};

/// Position-wise d_model -> d_ff -> d_model network.
template <typename T>
struct FeedForward {
    Linear<T> expand;
    Linear<T> contract;
    FfnActivation activation = FfnActivation::relu;

    Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Sinusoidal position table [length, d_model].
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t d_model);

/**
 * FocalGatedNet and the vanilla Transformer baseline.
 *
 * Encoder layers: self-attention, feed-forward. Decoder layers: causal
 * self-attention, cross-attention over the encoder output, an optional
 * causal GLU, feed-forward. Every sublayer is wrapped as
 * LayerNorm(x + Dropout(sublayer(x))).
 */
template <typename T>
class EncoderDecoderForecaster final : public Forecaster<T> {
public:
    EncoderDecoderForecaster(ModelConfig config, std::uint64_t seed);

    Tensor<T> forward(const ForecastBatch<T>& batch, bool training) override;
    std::vector<std::string> layer_inventory() const override;

    /// Encoder memory [B, L_in, d_model].
    Tensor<T> encode(const Tensor<T>& encoder_input, bool training);
    /// Projected decoder output at every decoder position, [B, label_len + H, output_dim].
    Tensor<T> decode_sequence(const ForecastBatch<T>& batch, bool training);

private:
    struct EncoderLayer {
        AttentionWeights<T> attention;
        LayerNormParams<T> attention_norm;
        FeedForward<T> ffn;
        LayerNormParams<T> ffn_norm;
    };
    struct DecoderLayer {
        AttentionWeights<T> self_attention;
        LayerNormParams<T> self_norm;
        AttentionWeights<T> cross_attention;
        LayerNormParams<T> cross_norm;
        GluWeights<T> glu;
        LayerNormParams<T> glu_norm;
        FeedForward<T> ffn;
        LayerNormParams<T> ffn_norm;
    };

    Linear<T> make_linear(const std::string& name, std::size_t in, std::size_t out, bool bias);
    LayerNormParams<T> make_norm(const std::string& name);
    FeedForward<T> make_ffn(const std::string& name);
    AttentionWeights<T> make_attention(const std::string& name);
    Tensor<T> embed(const Tensor<T>& x, const Linear<T>& dense, const Tensor<T>& conv_weight,
                    const Tensor<T>& conv_bias) const;
    Tensor<T> residual(const Tensor<T>& x, const Tensor<T>& update, const LayerNormParams<T>& norm, bool training);

    AttentionConfig attention_config_;
    GluConfig glu_config_;
    Linear<T> encoder_embedding_;
    Linear<T> decoder_embedding_;
    Tensor<T> encoder_conv_weight_, encoder_conv_bias_;
    Tensor<T> decoder_conv_weight_, decoder_conv_bias_;
    std::vector<EncoderLayer> encoder_layers_;
    std::vector<DecoderLayer> decoder_layers_;
    Linear<T> projection_;
};

/// Trend and seasonal parts of x [B, L, C]: moving average with edge replication, and the residual.
template <typename T>
struct Decomposition {
    Tensor<T> trend;
    Tensor<T> seasonal;
};

/// Window actually used for a series of `length` samples: min(window, length), forced odd.
std::size_t effective_moving_average_window(std::size_t window, std::size_t length);

template <typename T>
Decomposition<T> moving_average_decompose(const Tensor<T>& x, std::size_t window);

/// Maps [B, L_in, C] to [B, H, C] with one weight [L_in, H] and bias [H] shared over channels.
template <typename T>
Tensor<T> temporal_linear(const Tensor<T>& x, const Linear<T>& map);

template <typename T>
struct DLinearParams {
    Linear<T> trend;
    Linear<T> seasonal;
    std::size_t window = 25;
};

/// Linear_t(trend) + Linear_s(seasonal).
template <typename T>
Tensor<T> dlinear_forward(const Tensor<T>& x, const DLinearParams<T>& params);

/// Linear(x - x_last) + x_last.
template <typename T>
Tensor<T> nlinear_forward(const Tensor<T>& x, const Linear<T>& map);

template <typename T>
class DLinearForecaster final : public Forecaster<T> {
public:
    DLinearForecaster(ModelConfig config, std::uint64_t seed);
    Tensor<T> forward(const ForecastBatch<T>& batch, bool training) override;
    std::vector<std::string> layer_inventory() const override;
    const DLinearParams<T>& params() const { return params_; }

private:
    DLinearParams<T> params_;
};

template <typename T>
class NLinearForecaster final : public Forecaster<T> {
public:
    NLinearForecaster(ModelConfig config, std::uint64_t seed);
    Tensor<T> forward(const ForecastBatch<T>& batch, bool training) override;
    std::vector<std::string> layer_inventory() const override;
    const Linear<T>& map() const { return map_; }

private:
    Linear<T> map_;
};

/// Validates the config and constructs the selected variant with seeded initialization.
template <typename T>
std::unique_ptr<Forecaster<T>> build_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace fgn
