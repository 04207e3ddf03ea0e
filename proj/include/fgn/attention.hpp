#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fgn/tensor.hpp"

namespace fgn {

enum class MaskMode {
    pre_softmax_additive,  // blocked scores pushed to kMaskedScore before softmax
    literal_post_softmax,  // softmax first, then elementwise product with the 0/1 mask
};

std::string to_string(MaskMode mode);
MaskMode parse_mask_mode(const std::string& text);

inline constexpr double kMaskedScore = -1e9;

struct AttentionConfig {
    std::size_t d_model = 512;
    std::size_t heads = 8;
    double dropout_rate = 0.0;
    MaskMode mask_mode = MaskMode::pre_softmax_additive;

    std::size_t head_width() const { return d_model / heads; }
    /// Throws ConfigError unless d_model is a positive multiple of heads and dropout is in [0, 1).
    void validate() const;
};

/// Binary visibility matrix over (query position, key position); 1 = visible.
class AttentionMask {
public:
    AttentionMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> visible);

    /// Lower-triangular (diagonal included) mask.
    static AttentionMask causal(std::size_t length);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool visible(std::size_t row, std::size_t col) const { return visible_[row * cols_ + col] != 0; }
    bool has_empty_row() const;

    /// [rows, cols] tensor holding 0 for visible and kMaskedScore for blocked entries.
    template <typename T>
    Tensor<T> additive_bias() const;
    /// [rows, cols] tensor of 0/1 visibility.
    template <typename T>
    Tensor<T> indicator() const;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<std::uint8_t> visible_;
};

/// Bias-free projections W_Q, W_K, W_V and output projection W_O, each [d_model, d_model].
template <typename T>
struct AttentionWeights {
    Tensor<T> query;
    Tensor<T> key;
    Tensor<T> value;
    Tensor<T> output;

    static AttentionWeights init(std::size_t d_model, Rng& rng);
};

template <typename T>
struct HeadProjections {
    Tensor<T> query;  // [B, h, L_q, d_k]
    Tensor<T> key;    // [B, h, L_kv, d_k]
    Tensor<T> value;  // [B, h, L_kv, d_k]
};

/// Splits [B, L, d_model] into [B, h, L, d_model/h].
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads);

/// Inverse of split_heads: concatenation along the head dimension.
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x);

template <typename T>
HeadProjections<T> project_qkv(const Tensor<T>& x_query, const Tensor<T>& x_kv, const AttentionWeights<T>& weights,
                               const AttentionConfig& config);

template <typename T>
HeadProjections<T> project_qkv(const Tensor<T>& x, const AttentionWeights<T>& weights, const AttentionConfig& config) {
    return project_qkv(x, x, weights, config);
}

/// Scaling used by DCF attention: 1 / sqrt(d_model * h).
double dcf_scaling_factor(std::size_t d_model, std::size_t heads);
/// Conventional scaling: 1 / sqrt(d_k).
double standard_scaling_factor(std::size_t d_model, std::size_t heads);

/// Q K^T * factor, shape [B, h, L_q, L_kv].
template <typename T>
Tensor<T> scaled_scores(const Tensor<T>& query, const Tensor<T>& key, double factor);

/// Softmax over keys with the mask applied per `mode`. A null mask means all keys are visible.
template <typename T>
Tensor<T> apply_mask_and_normalize(const Tensor<T>& scores, const AttentionMask* mask, MaskMode mode);

enum class DcfRole {
    self_attention,   // gates V; requires L_q == L_kv
    cross_attention,  // gates the per-query context C so the output keeps L_q positions
};

/// Intermediate tensors captured for inspection by tests.
template <typename T>
struct DcfTrace {
    Tensor<T> attention;  // A, [B, h, L_q, L_kv]
    Tensor<T> context;    // C, [B, h, L_q, d_k]
    Tensor<T> salience;   // s, [B, h, L_q]
    Tensor<T> focus;      // W, [B, h, L_q]
};

template <typename T>
struct DcfOptions {
    DcfRole role = DcfRole::self_attention;
    /// Key visibility, [L_q, L_kv]. Null means unmasked.
    const AttentionMask* mask = nullptr;
    /**
     * Which query positions each position's salience is normalized against,
     * [L_q, L_q]. Null normalizes over all positions. A causal focus mask
     * keeps position t independent of positions after t.
     */
    const AttentionMask* focus_mask = nullptr;
    DcfTrace<T>* trace = nullptr;
};

/**
 * Dynamic Contextual Focus attention.
 *
 *   Q, K, V  = x_q W_Q, x_kv W_K, x_kv W_V            split into h heads
 *   A        = mask(softmax(Q K^T / sqrt(d_model h)))
 *   C[l]     = sum_j A[l, j] V[j]                     per head
 *   s[l]     = sum_d C[l, d]
 *   W        = dropout(softmax over positions of s)
 *   G[l]     = W[l] * V'[l]                           V' = V (self) or C (cross)
 *   out      = merge_heads(G) W_O
 */
template <typename T>
Tensor<T> dcf_attention(const Tensor<T>& x_query, const Tensor<T>& x_kv, const AttentionWeights<T>& weights,
                        const AttentionConfig& config, bool training, Rng& rng,
                        const DcfOptions<T>& options = {});

/// Conventional multi-head attention with 1/sqrt(d_k) scaling and additive masking.
template <typename T>
Tensor<T> standard_mha(const Tensor<T>& x_query, const Tensor<T>& x_kv, const AttentionWeights<T>& weights,
                       const AttentionMask* mask, const AttentionConfig& config, bool training, Rng& rng);

}  // namespace fgn
