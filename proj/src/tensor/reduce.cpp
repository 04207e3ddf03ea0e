#include "detail.hpp"

namespace fgn {

namespace {

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t d = 0; d < axis; ++d) {
        s.outer *= shape[d];
    }
    s.extent = shape[axis];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) {
        s.inner *= shape[d];
    }
    return s;
}

template <typename T>
Tensor<T> reduce_all(const Tensor<T>& x, T factor) {
    T acc = T(0);
    for (T v : x.data()) {
        acc += v;
    }
    Tensor<T> y = Tensor<T>::scalar(acc * factor);
    if (auto* tape = detail::tracking<T>(x)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), yi = y.handle(), factor] {
            if (yi->grad.empty()) {
                return;
            }
            const T g = yi->grad[0] * factor;
            for (auto& gx : detail::ensure_grad<T>(*xi)) {
                gx += g;
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> reduce_axis(const Tensor<T>& x, int axis, bool keepdim, bool average) {
    const std::size_t ax = detail::normalize_axis(axis, x.rank());
    const AxisSplit s = split_at(x.shape(), ax);
    const T factor = average ? T(1) / static_cast<T>(s.extent) : T(1);
    Shape out_shape;
    for (std::size_t d = 0; d < x.rank(); ++d) {
        if (d != ax) {
            out_shape.push_back(x.shape()[d]);
        } else if (keepdim) {
            out_shape.push_back(1);
        }
    }
    if (out_shape.empty()) {
        out_shape.push_back(1);
    }
    const auto v = x.data();
    std::vector<T> out(s.outer * s.inner, T(0));
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.extent; ++k) {
            const T* src = v.data() + (o * s.extent + k) * s.inner;
            T* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) {
                dst[i] += src[i];
            }
        }
    }
    for (auto& value : out) {
        value *= factor;
    }
    Tensor<T> y(out_shape, std::move(out));
    if (auto* tape = detail::tracking<T>(x)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), yi = y.handle(), s, factor] {
            if (yi->grad.empty()) {
                return;
            }
            auto& gx = detail::ensure_grad<T>(*xi);
            for (std::size_t o = 0; o < s.outer; ++o) {
                const T* src = yi->grad.data() + o * s.inner;
                for (std::size_t k = 0; k < s.extent; ++k) {
                    T* dst = gx.data() + (o * s.extent + k) * s.inner;
                    for (std::size_t i = 0; i < s.inner; ++i) {
                        dst[i] += src[i] * factor;
                    }
                }
            }
        });
    }
    return y;
}

}  // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    return reduce_all(x, T(1));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return reduce_all(x, T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis, bool keepdim) {
    return reduce_axis(x, axis, keepdim, false);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis, bool keepdim) {
    return reduce_axis(x, axis, keepdim, true);
}

#define FGN_INSTANTIATE(T)                                           \
    template Tensor<T> sum<T>(const Tensor<T>&);                     \
    template Tensor<T> mean<T>(const Tensor<T>&);                    \
    template Tensor<T> sum<T>(const Tensor<T>&, int, bool);          \
    template Tensor<T> mean<T>(const Tensor<T>&, int, bool);
FGN_INSTANTIATE_FOR_REALS(FGN_INSTANTIATE)
#undef FGN_INSTANTIATE

}  // namespace fgn
