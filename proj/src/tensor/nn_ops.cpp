#include <algorithm>
#include <cmath>

#include "detail.hpp"

namespace fgn {

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const std::size_t ax = detail::normalize_axis(axis, x.rank());
    const Shape& shape = x.shape();
    std::size_t outer = 1;
    for (std::size_t d = 0; d < ax; ++d) {
        outer *= shape[d];
    }
    const std::size_t extent = shape[ax];
    std::size_t inner = 1;
    for (std::size_t d = ax + 1; d < shape.size(); ++d) {
        inner *= shape[d];
    }
    const auto v = x.data();
    std::vector<T> out(v.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * extent * inner + i;
            T peak = v[base];
            for (std::size_t k = 1; k < extent; ++k) {
                peak = std::max(peak, v[base + k * inner]);
            }
            T total = T(0);
            for (std::size_t k = 0; k < extent; ++k) {
                const T e = std::exp(v[base + k * inner] - peak);
                out[base + k * inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < extent; ++k) {
                out[base + k * inner] /= total;
            }
        }
    }
    Tensor<T> y(shape, std::move(out));
    if (auto* tape = detail::tracking<T>(x)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), yi = y.handle(), outer, extent, inner] {
            const auto& gy = yi->grad;
            if (gy.empty()) {
                return;
            }
            const auto& s = yi->data;
            auto& gx = detail::ensure_grad<T>(*xi);
            // dx_k = s_k * (g_k - sum_j g_j s_j)
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t base = o * extent * inner + i;
                    T dot = T(0);
                    for (std::size_t k = 0; k < extent; ++k) {
                        dot += gy[base + k * inner] * s[base + k * inner];
                    }
                    for (std::size_t k = 0; k < extent; ++k) {
                        const std::size_t idx = base + k * inner;
                        gx[idx] += s[idx] * (gy[idx] - dot);
                    }
                }
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, bool causal) {
    if (x.rank() != 3 || weight.rank() != 3) {
        throw DimensionError("conv1d expects x [B,L,C_in] and weight [k,C_in,C_out], got " + shape_string(x.shape()) +
                             " and " + shape_string(weight.shape()));
    }
    const std::size_t batch = x.shape()[0];
    const std::size_t length = x.shape()[1];
    const std::size_t c_in = x.shape()[2];
    const std::size_t k = weight.shape()[0];
    const std::size_t c_out = weight.shape()[2];
    if (weight.shape()[1] != c_in) {
        throw DimensionError("conv1d channel mismatch: x " + shape_string(x.shape()) + " vs weight " +
                             shape_string(weight.shape()));
    }
    if (!causal && k % 2 == 0) {
        throw DimensionError("non-causal conv1d needs an odd kernel width, got " + std::to_string(k));
    }
    const std::size_t pad_left = causal ? k - 1 : (k - 1) / 2;
    const std::size_t pad_right = causal ? 0 : (k - 1) / 2;
    if (length + pad_left + pad_right < k) {
        throw DimensionError("conv1d kernel width " + std::to_string(k) + " exceeds padded input length " +
                             std::to_string(length + pad_left + pad_right));
    }
    if (bias.defined() && (bias.numel() != c_out)) {
        throw DimensionError("conv1d bias " + shape_string(bias.shape()) + " does not match C_out " +
                             std::to_string(c_out));
    }
    const auto vx = x.data();
    const auto vw = weight.data();
    std::vector<T> out(batch * length * c_out, T(0));
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < length; ++t) {
            T* dst = out.data() + (b * length + t) * c_out;
            if (bias.defined()) {
                std::copy_n(bias.data().begin(), c_out, dst);
            }
            for (std::size_t j = 0; j < k; ++j) {
                const long long src_t = static_cast<long long>(t + j) - static_cast<long long>(pad_left);
                if (src_t < 0 || src_t >= static_cast<long long>(length)) {
                    continue;
                }
                const T* src = vx.data() + (b * length + static_cast<std::size_t>(src_t)) * c_in;
                const T* wj = vw.data() + j * c_in * c_out;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const T xv = src[ci];
                    const T* wrow = wj + ci * c_out;
                    for (std::size_t co = 0; co < c_out; ++co) {
                        dst[co] += xv * wrow[co];
                    }
                }
            }
        }
    }
    Tensor<T> y({batch, length, c_out}, std::move(out));
    if (auto* tape = detail::tracking<T>(x, weight, bias)) {
        y.set_requires_grad(true);
        auto bi = bias.defined() ? bias.handle() : nullptr;
        tape->record([xi = x.handle(), wi = weight.handle(), bi, yi = y.handle(), batch, length, c_in, c_out, k,
                      pad_left] {
            const auto& gy = yi->grad;
            if (gy.empty()) {
                return;
            }
            T* gx = xi->requires_grad ? detail::ensure_grad<T>(*xi).data() : nullptr;
            T* gw = wi->requires_grad ? detail::ensure_grad<T>(*wi).data() : nullptr;
            T* gb = (bi && bi->requires_grad) ? detail::ensure_grad<T>(*bi).data() : nullptr;
            const T* vx = xi->data.data();
            const T* vw = wi->data.data();
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t t = 0; t < length; ++t) {
                    const T* g = gy.data() + (b * length + t) * c_out;
                    if (gb != nullptr) {
                        for (std::size_t co = 0; co < c_out; ++co) {
                            gb[co] += g[co];
                        }
                    }
                    for (std::size_t j = 0; j < k; ++j) {
                        const long long src_t = static_cast<long long>(t + j) - static_cast<long long>(pad_left);
                        if (src_t < 0 || src_t >= static_cast<long long>(length)) {
                            continue;
                        }
                        const std::size_t row = (b * length + static_cast<std::size_t>(src_t)) * c_in;
                        for (std::size_t ci = 0; ci < c_in; ++ci) {
                            const T* wrow = vw + (j * c_in + ci) * c_out;
                            if (gx != nullptr) {
                                T acc = T(0);
                                for (std::size_t co = 0; co < c_out; ++co) {
                                    acc += g[co] * wrow[co];
                                }
                                gx[row + ci] += acc;
                            }
                            if (gw != nullptr) {
                                const T xv = vx[row + ci];
                                T* gwrow = gw + (j * c_in + ci) * c_out;
                                for (std::size_t co = 0; co < c_out; ++co) {
                                    gwrow[co] += xv * g[co];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& offset) {
    const std::size_t width = x.shape().back();
    if (gain.numel() != width || offset.numel() != width) {
        throw DimensionError("layer_norm affine parameters must have " + std::to_string(width) + " entries");
    }
    const std::size_t rows = x.numel() / width;
    const auto vx = x.data();
    const auto vg = gain.data();
    const auto vo = offset.data();
    std::vector<T> out(vx.size());
    std::vector<T> normalized(vx.size());
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = vx.data() + r * width;
        T mu = T(0);
        for (std::size_t i = 0; i < width; ++i) {
            mu += src[i];
        }
        mu /= static_cast<T>(width);
        T var = T(0);
        for (std::size_t i = 0; i < width; ++i) {
            var += (src[i] - mu) * (src[i] - mu);
        }
        var /= static_cast<T>(width);
        const T istd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEpsilon));
        inv_std[r] = istd;
        for (std::size_t i = 0; i < width; ++i) {
            const T xhat = (src[i] - mu) * istd;
            normalized[r * width + i] = xhat;
            out[r * width + i] = xhat * vg[i] + vo[i];
        }
    }
    Tensor<T> y(x.shape(), std::move(out));
    if (auto* tape = detail::tracking<T>(x, gain, offset)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), gi = gain.handle(), oi = offset.handle(), yi = y.handle(),
                      normalized = std::move(normalized), inv_std = std::move(inv_std), rows, width] {
            const auto& gy = yi->grad;
            if (gy.empty()) {
                return;
            }
            T* gx = xi->requires_grad ? detail::ensure_grad<T>(*xi).data() : nullptr;
            T* gg = gi->requires_grad ? detail::ensure_grad<T>(*gi).data() : nullptr;
            T* go = oi->requires_grad ? detail::ensure_grad<T>(*oi).data() : nullptr;
            const T* vg = gi->data.data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* g = gy.data() + r * width;
                const T* xhat = normalized.data() + r * width;
                T mean_d = T(0);
                T mean_dx = T(0);
                for (std::size_t i = 0; i < width; ++i) {
                    const T d = g[i] * vg[i];
                    mean_d += d;
                    mean_dx += d * xhat[i];
                    if (gg != nullptr) {
                        gg[i] += g[i] * xhat[i];
                    }
                    if (go != nullptr) {
                        go[i] += g[i];
                    }
                }
                if (gx == nullptr) {
                    continue;
                }
                mean_d /= static_cast<T>(width);
                mean_dx /= static_cast<T>(width);
                for (std::size_t i = 0; i < width; ++i) {
                    const T d = g[i] * vg[i];
                    gx[r * width + i] += inv_std[r] * (d - mean_d - xhat[i] * mean_dx);
                }
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> mask(x.numel());
    for (auto& m : mask) {
        m = rng.uniform() < rate ? T(0) : keep_scale;
    }
    const auto vx = x.data();
    std::vector<T> out(vx.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = vx[i] * mask[i];
    }
    Tensor<T> y(x.shape(), std::move(out));
    if (auto* tape = detail::tracking<T>(x)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), yi = y.handle(), mask = std::move(mask)] {
            if (yi->grad.empty()) {
                return;
            }
            auto& gx = detail::ensure_grad<T>(*xi);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += yi->grad[i] * mask[i];
            }
        });
    }
    return y;
}

#define FGN_INSTANTIATE(T)                                                                               \
    template Tensor<T> softmax<T>(const Tensor<T>&, int);                                                \
    template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);            \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
    template Tensor<T> dropout<T>(const Tensor<T>&, double, bool, Rng&);
FGN_INSTANTIATE_FOR_REALS(FGN_INSTANTIATE)
#undef FGN_INSTANTIATE

}  // namespace fgn
