#include "fgn/glu.hpp"

#include <cmath>
#include <string>

namespace fgn {

void GluConfig::validate() const {
    if (d_model == 0) {
        throw ConfigError("GLU d_model must be positive");
    }
    if (kernel < 1) {
        throw ConfigError("GLU kernel width must be at least 1");
    }
    if (!causal && kernel % 2 == 0) {
        throw ConfigError("non-causal GLU needs an odd kernel width, got " + std::to_string(kernel));
    }
}

template <typename T>
GluWeights<T> GluWeights<T>::init(const GluConfig& config, Rng& rng) {
    config.validate();
    const std::size_t d = config.d_model;
    const T bound = T(1) / std::sqrt(static_cast<T>(config.kernel * d));
    GluWeights w;
    w.gate_weight = Tensor<T>::uniform({config.kernel, d, d}, -bound, bound, rng);
    w.gate_bias = Tensor<T>::zeros({d});
    w.linear_weight = Tensor<T>::uniform({config.kernel, d, d}, -bound, bound, rng);
    w.linear_bias = Tensor<T>::zeros({d});
    return w;
}

template <typename T>
Tensor<T> glu_forward(const Tensor<T>& x, const GluWeights<T>& weights, const GluConfig& config) {
    config.validate();
    if (x.rank() != 3 || x.dim(2) != config.d_model) {
        throw DimensionError("GLU input must be [B, L, " + std::to_string(config.d_model) + "], got " +
                             shape_string(x.shape()));
    }
    if (weights.gate_weight.dim(0) != config.kernel) {
        throw DimensionError("GLU weights have kernel width " + std::to_string(weights.gate_weight.dim(0)) +
                             " but config says " + std::to_string(config.kernel));
    }
    const Tensor<T> gate = sigmoid(conv1d(x, weights.gate_weight, weights.gate_bias, config.causal));
    const Tensor<T> linear = conv1d(x, weights.linear_weight, weights.linear_bias, config.causal);
    return mul(gate, linear);
}

template struct GluWeights<float>;
template struct GluWeights<double>;
template Tensor<float> glu_forward<float>(const Tensor<float>&, const GluWeights<float>&, const GluConfig&);
template Tensor<double> glu_forward<double>(const Tensor<double>&, const GluWeights<double>&, const GluConfig&);

}  // namespace fgn
