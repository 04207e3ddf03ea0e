#pragma once

#include "fgn/tensor.hpp"

namespace fgn {

struct GluConfig {
    std::size_t d_model = 512;
    std::size_t kernel = 3;
    bool causal = true;

    void validate() const;
};

/// Gate and linear branch convolutions, each [k, d_model, d_model] with a [d_model] bias.
template <typename T>
struct GluWeights {
    Tensor<T> gate_weight;
    Tensor<T> gate_bias;
    Tensor<T> linear_weight;
    Tensor<T> linear_bias;

    static GluWeights init(const GluConfig& config, Rng& rng);
};

/// sigmoid(conv_g(x)) * conv_h(x) over x [B, L, d_model]; output keeps L.
template <typename T>
Tensor<T> glu_forward(const Tensor<T>& x, const GluWeights<T>& weights, const GluConfig& config);

}  // namespace fgn
