#include "fgn/attention.hpp"

#include <cmath>

namespace fgn {

std::string to_string(MaskMode mode) {
    return mode == MaskMode::pre_softmax_additive ? "pre_softmax_additive" : "literal_post_softmax";
}

MaskMode parse_mask_mode(const std::string& text) {
    if (text == "pre_softmax_additive") {
        return MaskMode::pre_softmax_additive;
    }
    if (text == "literal_post_softmax") {
        return MaskMode::literal_post_softmax;
    }
    throw ConfigError("unknown mask_mode '" + text + "'");
}

void AttentionConfig::validate() const {
    if (d_model == 0 || heads == 0) {
        throw ConfigError("attention needs positive d_model and head count");
    }
    if (d_model % heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by h " + std::to_string(heads));
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw ConfigError("attention dropout must lie in [0, 1)");
    }
}

AttentionMask::AttentionMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> visible)
    : rows_(rows), cols_(cols), visible_(std::move(visible)) {
    if (visible_.size() != rows * cols) {
        throw DimensionError("mask data does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

AttentionMask AttentionMask::causal(std::size_t length) {
    std::vector<std::uint8_t> visible(length * length, 0);
    for (std::size_t i = 0; i < length; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            visible[i * length + j] = 1;
        }
    }
    return AttentionMask(length, length, std::move(visible));
}

bool AttentionMask::has_empty_row() const {
    for (std::size_t i = 0; i < rows_; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < cols_ && !any; ++j) {
            any = visible(i, j);
        }
        if (!any) {
            return true;
        }
    }
    return false;
}

template <typename T>
Tensor<T> AttentionMask::additive_bias() const {
    std::vector<T> values(visible_.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = visible_[i] ? T(0) : static_cast<T>(kMaskedScore);
    }
    return Tensor<T>({rows_, cols_}, std::move(values));
}

template <typename T>
Tensor<T> AttentionMask::indicator() const {
    std::vector<T> values(visible_.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = visible_[i] ? T(1) : T(0);
    }
    return Tensor<T>({rows_, cols_}, std::move(values));
}

template <typename T>
AttentionWeights<T> AttentionWeights<T>::init(std::size_t d_model, Rng& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(d_model));
    AttentionWeights w;
    w.query = Tensor<T>::uniform({d_model, d_model}, -bound, bound, rng);
    w.key = Tensor<T>::uniform({d_model, d_model}, -bound, bound, rng);
    w.value = Tensor<T>::uniform({d_model, d_model}, -bound, bound, rng);
    w.output = Tensor<T>::uniform({d_model, d_model}, -bound, bound, rng);
    return w;
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
    const std::size_t batch = x.dim(0);
    const std::size_t length = x.dim(1);
    const std::size_t width = x.dim(2);
    return permute(reshape(x, {batch, length, heads, width / heads}), {0, 2, 1, 3});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
    const std::size_t batch = x.dim(0);
    const std::size_t heads = x.dim(1);
    const std::size_t length = x.dim(2);
    const std::size_t head_width = x.dim(3);
    return reshape(permute(x, {0, 2, 1, 3}), {batch, length, heads * head_width});
}

namespace {

template <typename T>
void check_stream(const Tensor<T>& x, std::size_t d_model, const char* name) {
    if (x.rank() != 3 || x.dim(2) != d_model) {
        throw DimensionError(std::string(name) + " must be [B, L, " + std::to_string(d_model) + "], got " +
                             shape_string(x.shape()));
    }
}

}  // namespace

template <typename T>
HeadProjections<T> project_qkv(const Tensor<T>& x_query, const Tensor<T>& x_kv, const AttentionWeights<T>& weights,
                               const AttentionConfig& config) {
    config.validate();
    check_stream(x_query, config.d_model, "query stream");
    check_stream(x_kv, config.d_model, "key/value stream");
    if (x_query.dim(0) != x_kv.dim(0)) {
        throw DimensionError("query and key/value batch sizes differ: " + shape_string(x_query.shape()) + " vs " +
                             shape_string(x_kv.shape()));
    }
    HeadProjections<T> p;
    p.query = split_heads(matmul(x_query, weights.query), config.heads);
    p.key = split_heads(matmul(x_kv, weights.key), config.heads);
    p.value = split_heads(matmul(x_kv, weights.value), config.heads);
    return p;
}

double dcf_scaling_factor(std::size_t d_model, std::size_t heads) {
    return 1.0 / std::sqrt(static_cast<double>(d_model) * static_cast<double>(heads));
}

double standard_scaling_factor(std::size_t d_model, std::size_t heads) {
    return 1.0 / std::sqrt(static_cast<double>(d_model / heads));
}

template <typename T>
Tensor<T> scaled_scores(const Tensor<T>& query, const Tensor<T>& key, double factor) {
    return scale(matmul(query, transpose(key, -1, -2)), static_cast<T>(factor));
}

template <typename T>
Tensor<T> apply_mask_and_normalize(const Tensor<T>& scores, const AttentionMask* mask, MaskMode mode) {
    if (mask == nullptr) {
        return softmax(scores, -1);
    }
    if (mask->rows() != scores.dim(-2) || mask->cols() != scores.dim(-1)) {
        throw DimensionError("mask " + std::to_string(mask->rows()) + "x" + std::to_string(mask->cols()) +
                             " does not broadcast to scores " + shape_string(scores.shape()));
    }
    if (mode == MaskMode::pre_softmax_additive) {
        if (mask->has_empty_row()) {
            throw DegenerateMaskError("additive masking leaves a query row with no visible key");
        }
        return softmax(add(scores, mask->additive_bias<T>()), -1);
    }
    return mul(softmax(scores, -1), mask->indicator<T>());
}

namespace {

// Softmax of s [B, h, L] over positions, each position normalized against the
// positions its focus-mask row marks visible.
template <typename T>
Tensor<T> focus_softmax(const Tensor<T>& salience, const AttentionMask* focus_mask) {
    if (focus_mask == nullptr) {
        return softmax(salience, -1);
    }
    const std::size_t length = salience.dim(-1);
    if (focus_mask->rows() != length || focus_mask->cols() != length) {
        throw DimensionError("focus mask must be " + std::to_string(length) + "x" + std::to_string(length));
    }
    for (std::size_t l = 0; l < length; ++l) {
        if (!focus_mask->visible(l, l)) {
            throw DegenerateMaskError("focus mask hides position " + std::to_string(l) + " from itself");
        }
    }
    const std::size_t batch = salience.dim(0);
    const std::size_t heads = salience.dim(1);
    // rows[b, h, l, l'] = s[b, h, l'] masked by focus_mask[l, l']; W[l] is the diagonal of its softmax.
    const Tensor<T> rows = add(reshape(salience, {batch, heads, 1, length}), focus_mask->additive_bias<T>());
    std::vector<T> eye(length * length, T(0));
    for (std::size_t l = 0; l < length; ++l) {
        eye[l * length + l] = T(1);
    }
    const Tensor<T> diagonal({length, length}, std::move(eye));
    return sum(mul(softmax(rows, -1), diagonal), -1);
}

}  // namespace

template <typename T>
Tensor<T> dcf_attention(const Tensor<T>& x_query, const Tensor<T>& x_kv, const AttentionWeights<T>& weights,
                        const AttentionConfig& config, bool training, Rng& rng, const DcfOptions<T>& options) {
    const HeadProjections<T> qkv = project_qkv(x_query, x_kv, weights, config);
    const std::size_t batch = x_query.dim(0);
    const std::size_t heads = config.heads;
    const std::size_t length_q = x_query.dim(1);
    if (options.role == DcfRole::self_attention && length_q != x_kv.dim(1)) {
        throw DimensionError("DCF self-attention needs equal query and key lengths, got " +
                             std::to_string(length_q) + " and " + std::to_string(x_kv.dim(1)));
    }

    const Tensor<T> scores = scaled_scores(qkv.query, qkv.key, dcf_scaling_factor(config.d_model, heads));
    const Tensor<T> attention = apply_mask_and_normalize(scores, options.mask, config.mask_mode);
    const Tensor<T> context = matmul(attention, qkv.value);
    const Tensor<T> salience = sum(context, -1);
    const Tensor<T> focus = dropout(focus_softmax(salience, options.focus_mask), config.dropout_rate, training, rng);

    const Tensor<T>& gated_source = options.role == DcfRole::self_attention ? qkv.value : context;
    const Tensor<T> gated = mul(reshape(focus, {batch, heads, length_q, 1}), gated_source);
    Tensor<T> out = matmul(merge_heads(gated), weights.output);

    if (options.trace != nullptr) {
        options.trace->attention = attention;
        options.trace->context = context;
        options.trace->salience = salience;
        options.trace->focus = focus;
    }
    return out;
}

template <typename T>
Tensor<T> standard_mha(const Tensor<T>& x_query, const Tensor<T>& x_kv, const AttentionWeights<T>& weights,
                       const AttentionMask* mask, const AttentionConfig& config, bool training, Rng& rng) {
    const HeadProjections<T> qkv = project_qkv(x_query, x_kv, weights, config);
    const Tensor<T> scores =
        scaled_scores(qkv.query, qkv.key, standard_scaling_factor(config.d_model, config.heads));
    Tensor<T> attention = apply_mask_and_normalize(scores, mask, MaskMode::pre_softmax_additive);
    attention = dropout(attention, config.dropout_rate, training, rng);
    return matmul(merge_heads(matmul(attention, qkv.value)), weights.output);
}

#define FGN_INSTANTIATE(T)                                                                                        \
    template Tensor<T> AttentionMask::additive_bias<T>() const;                                                   \
    template Tensor<T> AttentionMask::indicator<T>() const;                                                       \
    template struct AttentionWeights<T>;                                                                          \
    template Tensor<T> split_heads<T>(const Tensor<T>&, std::size_t);                                             \
    template Tensor<T> merge_heads<T>(const Tensor<T>&);                                                          \
    template HeadProjections<T> project_qkv<T>(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&,    \
                                               const AttentionConfig&);                                           \
    template Tensor<T> scaled_scores<T>(const Tensor<T>&, const Tensor<T>&, double);                              \
    template Tensor<T> apply_mask_and_normalize<T>(const Tensor<T>&, const AttentionMask*, MaskMode);             \
    template Tensor<T> dcf_attention<T>(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&,           \
                                        const AttentionConfig&, bool, Rng&, const DcfOptions<T>&);                \
    template Tensor<T> standard_mha<T>(const Tensor<T>&, const Tensor<T>&, const AttentionWeights<T>&,            \
                                       const AttentionMask*, const AttentionConfig&, bool, Rng&);
FGN_INSTANTIATE(float)
FGN_INSTANTIATE(double)
#undef FGN_INSTANTIATE

}  // namespace fgn
