#include <cmath>
#include <numbers>

#include "detail.hpp"

namespace fgn {

namespace {

enum class BinaryKind { add, sub, mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind) {
    const auto plan = detail::plan_broadcast(a.shape(), b.shape());
    std::vector<T> out(shape_numel(plan.out));
    const auto da = a.data();
    const auto db = b.data();
    switch (kind) {
        case BinaryKind::add:
            detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] + db[j]; });
            break;
        case BinaryKind::sub:
            detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] - db[j]; });
            break;
        case BinaryKind::mul:
            detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] * db[j]; });
            break;
    }
    Tensor<T> y(plan.out, std::move(out));
    if (auto* tape = detail::tracking<T>(a, b)) {
        y.set_requires_grad(true);
        tape->record([ai = a.handle(), bi = b.handle(), yi = y.handle(), plan, kind] {
            const auto& gy = yi->grad;
            if (gy.empty()) {
                return;
            }
            if (ai->requires_grad) {
                auto& ga = detail::ensure_grad<T>(*ai);
                if (kind == BinaryKind::mul) {
                    const auto& vb = bi->data;
                    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += gy[o] * vb[j]; });
                } else {
                    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += gy[o]; });
                }
            }
            if (bi->requires_grad) {
                auto& gb = detail::ensure_grad<T>(*bi);
                if (kind == BinaryKind::mul) {
                    const auto& va = ai->data;
                    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += gy[o] * va[i]; });
                } else if (kind == BinaryKind::sub) {
                    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= gy[o]; });
                } else {
                    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += gy[o]; });
                }
            }
        });
    }
    return y;
}

// Unary op where the local derivative is a function of input and output.
template <typename T, typename Forward, typename Derivative>
Tensor<T> unary(const Tensor<T>& x, Forward forward, Derivative derivative) {
    const auto dx = x.data();
    std::vector<T> out(dx.size());
    for (std::size_t i = 0; i < dx.size(); ++i) {
        out[i] = forward(dx[i]);
    }
    Tensor<T> y(x.shape(), std::move(out));
    if (auto* tape = detail::tracking<T>(x)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), yi = y.handle(), derivative] {
            const auto& gy = yi->grad;
            if (gy.empty()) {
                return;
            }
            auto& gx = detail::ensure_grad<T>(*xi);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += gy[i] * derivative(xi->data[i], yi->data[i]);
            }
        });
    }
    return y;
}

template <typename T>
T stable_sigmoid(T v) {
    if (v >= T(0)) {
        return T(1) / (T(1) + std::exp(-v));
    }
    const T e = std::exp(v);
    return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::add);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::sub);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::mul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    return unary(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
    return unary(x, [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary(x, [](T v) { return stable_sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    return unary(
        x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2))); },
        [](T v, T) {
            const T cdf = T(0.5) * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2)));
            const T pdf = std::exp(T(-0.5) * v * v) * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
            return cdf + v * pdf;
        });
}

#define FGN_INSTANTIATE(T)                                               \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                   \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, T);              \
    template Tensor<T> square<T>(const Tensor<T>&);                     \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                    \
    template Tensor<T> relu<T>(const Tensor<T>&);                       \
    template Tensor<T> gelu<T>(const Tensor<T>&);
FGN_INSTANTIATE_FOR_REALS(FGN_INSTANTIATE)
#undef FGN_INSTANTIATE

}  // namespace fgn
