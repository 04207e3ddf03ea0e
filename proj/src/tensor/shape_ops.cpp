#include <algorithm>
#include <numeric>

#include "detail.hpp"

namespace fgn {

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
    }
    Tensor<T> y(shape, std::vector<T>(x.data().begin(), x.data().end()));
    if (auto* tape = detail::tracking<T>(x)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), yi = y.handle()] {
            if (yi->grad.empty()) {
                return;
            }
            auto& gx = detail::ensure_grad<T>(*xi);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += yi->grad[i];
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
    const Shape& in = x.shape();
    const std::size_t rank = in.size();
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expected(rank);
    std::iota(expected.begin(), expected.end(), 0);
    if (sorted != expected) {
        throw DimensionError("invalid permutation for shape " + shape_string(in));
    }
    Shape out_shape(rank);
    const auto in_strides = detail::contiguous_strides(in);
    // Output axis d walks input axis order[d].
    detail::BroadcastPlan plan;
    plan.stride_a.resize(rank);
    plan.stride_b.resize(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        out_shape[d] = in[order[d]];
        plan.stride_a[d] = in_strides[order[d]];
    }
    plan.out = out_shape;
    plan.stride_b = detail::contiguous_strides(out_shape);

    // Map from output flat index to input flat index.
    std::vector<std::size_t> source(x.numel());
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { source[o] = i; });

    const auto vx = x.data();
    std::vector<T> out(vx.size());
    for (std::size_t o = 0; o < out.size(); ++o) {
        out[o] = vx[source[o]];
    }
    Tensor<T> y(out_shape, std::move(out));
    if (auto* tape = detail::tracking<T>(x)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), yi = y.handle(), source = std::move(source)] {
            if (yi->grad.empty()) {
                return;
            }
            auto& gx = detail::ensure_grad<T>(*xi);
            for (std::size_t o = 0; o < source.size(); ++o) {
                gx[source[o]] += yi->grad[o];
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis_a, int axis_b) {
    const std::size_t a = detail::normalize_axis(axis_a, x.rank());
    const std::size_t b = detail::normalize_axis(axis_b, x.rank());
    std::vector<std::size_t> order(x.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[a], order[b]);
    return permute(x, order);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) {
        throw DimensionError("concat of zero tensors");
    }
    const Shape& first = parts.front().shape();
    const std::size_t ax = detail::normalize_axis(axis, first.size());
    Shape out_shape = first;
    out_shape[ax] = 0;
    for (const auto& part : parts) {
        const Shape& s = part.shape();
        bool compatible = s.size() == first.size();
        for (std::size_t d = 0; compatible && d < s.size(); ++d) {
            compatible = d == ax || s[d] == first[d];
        }
        if (!compatible) {
            throw DimensionError("concat shape mismatch: " + shape_string(first) + " vs " + shape_string(s));
        }
        out_shape[ax] += s[ax];
    }
    std::size_t outer = 1;
    for (std::size_t d = 0; d < ax; ++d) {
        outer *= first[d];
    }
    std::size_t inner = 1;
    for (std::size_t d = ax + 1; d < first.size(); ++d) {
        inner *= first[d];
    }
    const std::size_t out_row = out_shape[ax] * inner;
    std::vector<T> out(shape_numel(out_shape));
    std::vector<std::size_t> column_offsets;
    std::size_t column = 0;
    for (const auto& part : parts) {
        column_offsets.push_back(column);
        const std::size_t row = part.shape()[ax] * inner;
        const auto v = part.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.begin() + o * row, row, out.begin() + o * out_row + column);
        }
        column += row;
    }
    Tensor<T> y(out_shape, std::move(out));
    bool any = false;
    for (const auto& part : parts) {
        any = any || part.requires_grad();
    }
    Tape<T>* tape = current_tape<T>();
    if (tape != nullptr && any) {
        y.set_requires_grad(true);
        std::vector<std::shared_ptr<typename Tensor<T>::Impl>> handles;
        for (const auto& part : parts) {
            handles.push_back(part.handle());
        }
        tape->record([handles, yi = y.handle(), column_offsets, outer, inner, out_row, ax] {
            if (yi->grad.empty()) {
                return;
            }
            for (std::size_t p = 0; p < handles.size(); ++p) {
                auto& h = *handles[p];
                if (!h.requires_grad) {
                    continue;
                }
                auto& g = detail::ensure_grad<T>(h);
                const std::size_t row = h.shape[ax] * inner;
                for (std::size_t o = 0; o < outer; ++o) {
                    const T* src = yi->grad.data() + o * out_row + column_offsets[p];
                    T* dst = g.data() + o * row;
                    for (std::size_t i = 0; i < row; ++i) {
                        dst[i] += src[i];
                    }
                }
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length) {
    const Shape& in = x.shape();
    const std::size_t ax = detail::normalize_axis(axis, in.size());
    if (length == 0 || start + length > in[ax]) {
        throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") out of range for axis of extent " + std::to_string(in[ax]));
    }
    std::size_t outer = 1;
    for (std::size_t d = 0; d < ax; ++d) {
        outer *= in[d];
    }
    std::size_t inner = 1;
    for (std::size_t d = ax + 1; d < in.size(); ++d) {
        inner *= in[d];
    }
    Shape out_shape = in;
    out_shape[ax] = length;
    const std::size_t in_row = in[ax] * inner;
    const std::size_t out_row = length * inner;
    const std::size_t skip = start * inner;
    const auto v = x.data();
    std::vector<T> out(outer * out_row);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(v.begin() + o * in_row + skip, out_row, out.begin() + o * out_row);
    }
    Tensor<T> y(out_shape, std::move(out));
    if (auto* tape = detail::tracking<T>(x)) {
        y.set_requires_grad(true);
        tape->record([xi = x.handle(), yi = y.handle(), outer, in_row, out_row, skip] {
            if (yi->grad.empty()) {
                return;
            }
            auto& gx = detail::ensure_grad<T>(*xi);
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < out_row; ++i) {
                    gx[o * in_row + skip + i] += yi->grad[o * out_row + i];
                }
            }
        });
    }
    return y;
}

#define FGN_INSTANTIATE(T)                                                                  \
    template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);                          \
    template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);       \
    template Tensor<T> transpose<T>(const Tensor<T>&, int, int);                            \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                       \
    template Tensor<T> slice<T>(const Tensor<T>&, int, std::size_t, std::size_t);
FGN_INSTANTIATE_FOR_REALS(FGN_INSTANTIATE)
#undef FGN_INSTANTIATE

}  // namespace fgn
