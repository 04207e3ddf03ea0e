#include <nlohmann/json.hpp>

#include "fgn/model.hpp"

namespace fgn {

namespace {

template <typename Enum>
struct EnumName {
    Enum value;
    const char* name;
};

constexpr EnumName<Variant> kVariants[] = {{Variant::focalgatednet, "focalgatednet"},
                                           {Variant::transformer, "transformer"},
                                           {Variant::dlinear, "dlinear"},
                                           {Variant::nlinear, "nlinear"}};
constexpr EnumName<Ablation> kAblations[] = {
    {Ablation::glu_dcf, "glu_dcf"}, {Ablation::dcf_only, "dcf_only"}, {Ablation::glu_only, "glu_only"}};
constexpr EnumName<PositionalEmbedding> kPositional[] = {{PositionalEmbedding::none, "none"},
                                                         {PositionalEmbedding::sinusoidal, "sinusoidal"}};
constexpr EnumName<InputEmbedding> kEmbeddings[] = {{InputEmbedding::dense, "dense"}, {InputEmbedding::conv, "conv"}};
constexpr EnumName<FfnActivation> kActivations[] = {{FfnActivation::relu, "relu"}, {FfnActivation::gelu, "gelu"}};

template <typename Enum, std::size_t N>
std::string name_of(const EnumName<Enum> (&table)[N], Enum value) {
    for (const auto& entry : table) {
        if (entry.value == value) {
            return entry.name;
        }
    }
    return "?";
}

template <typename Enum, std::size_t N>
Enum parse(const EnumName<Enum> (&table)[N], const std::string& text, const char* what) {
    for (const auto& entry : table) {
        if (text == entry.name) {
            return entry.value;
        }
    }
    throw ConfigError(std::string("unknown ") + what + " '" + text + "'");
}

}  // namespace

std::string to_string(Variant v) { return name_of(kVariants, v); }
std::string to_string(Ablation a) { return name_of(kAblations, a); }
std::string to_string(PositionalEmbedding p) { return name_of(kPositional, p); }
std::string to_string(InputEmbedding e) { return name_of(kEmbeddings, e); }
std::string to_string(FfnActivation a) { return name_of(kActivations, a); }
Variant parse_variant(const std::string& text) { return parse(kVariants, text, "variant"); }
Ablation parse_ablation(const std::string& text) { return parse(kAblations, text, "ablation"); }
PositionalEmbedding parse_positional_embedding(const std::string& text) {
    return parse(kPositional, text, "positional_embedding");
}
InputEmbedding parse_input_embedding(const std::string& text) { return parse(kEmbeddings, text, "input_embedding"); }
FfnActivation parse_ffn_activation(const std::string& text) { return parse(kActivations, text, "ffn_activation"); }

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.n_encoder_layers = 1;
    c.n_decoder_layers = 1;
    c.d_model = 16;
    c.d_ff = 32;
    c.heads = 2;
    c.lookback = 8;
    c.label_len = 4;
    c.horizon = 4;
    return c;
}

bool ModelConfig::uses_dcf() const {
    return variant == Variant::focalgatednet && ablation != Ablation::glu_only;
}

bool ModelConfig::uses_glu() const {
    return variant == Variant::focalgatednet && ablation != Ablation::dcf_only;
}

void ModelConfig::validate() const {
    auto positive = [](std::size_t value, const char* name) {
        if (value == 0) {
            throw ConfigError(std::string(name) + " must be positive");
        }
    };
    positive(lookback, "lookback");
    positive(horizon, "horizon");
    positive(input_dim, "input_dim");
    positive(output_dim, "output_dim");
    if (label_len > lookback) {
        throw ConfigError("label_len " + std::to_string(label_len) + " exceeds lookback " + std::to_string(lookback));
    }
    if (variant == Variant::focalgatednet || variant == Variant::transformer) {
        positive(n_encoder_layers, "n_encoder_layers");
        positive(n_decoder_layers, "n_decoder_layers");
        positive(d_ff, "d_ff");
        AttentionConfig{d_model, heads, dropout_rate, mask_mode}.validate();
        if (variant == Variant::focalgatednet && ablation != Ablation::dcf_only) {
            GluConfig{d_model, glu_kernel, glu_causal}.validate();
        }
    }
    if (variant == Variant::dlinear) {
        if (lookback < 2) {
            throw ConfigError("DLinear needs a lookback of at least 2 samples");
        }
        positive(moving_average_window, "moving_average_window");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {
        {"n_encoder_layers", n_encoder_layers},
        {"n_decoder_layers", n_decoder_layers},
        {"d_model", d_model},
        {"d_ff", d_ff},
        {"heads", heads},
        {"dropout_rate", dropout_rate},
        {"glu_kernel", glu_kernel},
        {"glu_causal", glu_causal},
        {"lookback", lookback},
        {"label_len", label_len},
        {"horizon", horizon},
        {"input_dim", input_dim},
        {"output_dim", output_dim},
        {"positional_embedding", to_string(positional_embedding)},
        {"input_embedding", to_string(input_embedding)},
        {"variant", to_string(variant)},
        {"ablation", to_string(ablation)},
        {"mask_mode", to_string(mask_mode)},
        {"ffn_activation", to_string(ffn_activation)},
        {"moving_average_window", moving_average_window},
    };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("model config must be a JSON object");
    }
    ModelConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "n_encoder_layers") c.n_encoder_layers = value.get<std::size_t>();
            else if (key == "n_decoder_layers") c.n_decoder_layers = value.get<std::size_t>();
            else if (key == "d_model") c.d_model = value.get<std::size_t>();
            else if (key == "d_ff") c.d_ff = value.get<std::size_t>();
            else if (key == "heads") c.heads = value.get<std::size_t>();
            else if (key == "dropout_rate") c.dropout_rate = value.get<double>();
            else if (key == "glu_kernel") c.glu_kernel = value.get<std::size_t>();
            else if (key == "glu_causal") c.glu_causal = value.get<bool>();
            else if (key == "lookback") c.lookback = value.get<std::size_t>();
            else if (key == "label_len") c.label_len = value.get<std::size_t>();
            else if (key == "horizon") c.horizon = value.get<std::size_t>();
            else if (key == "input_dim") c.input_dim = value.get<std::size_t>();
            else if (key == "output_dim") c.output_dim = value.get<std::size_t>();
            else if (key == "positional_embedding") c.positional_embedding = parse_positional_embedding(value.get<std::string>());
            else if (key == "input_embedding") c.input_embedding = parse_input_embedding(value.get<std::string>());
            else if (key == "variant") c.variant = parse_variant(value.get<std::string>());
            else if (key == "ablation") c.ablation = parse_ablation(value.get<std::string>());
            else if (key == "mask_mode") c.mask_mode = parse_mask_mode(value.get<std::string>());
            else if (key == "ffn_activation") c.ffn_activation = parse_ffn_activation(value.get<std::string>());
            else if (key == "moving_average_window") c.moving_average_window = value.get<std::size_t>();
            else throw ConfigError("unknown model config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("model config key '" + key + "': " + e.what());
        }
    }
    return c;
}

}  // namespace fgn
