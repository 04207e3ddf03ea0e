#pragma once

// Internal helpers shared by the tensor op implementations.

#include <cstddef>
#include <vector>

#include "fgn/tensor.hpp"

namespace fgn::detail {

/// Returns the active tape when any input participates in differentiation.
template <typename T, typename... Ts>
Tape<T>* tracking(const Ts&... inputs) {
    Tape<T>* tape = current_tape<T>();
    if (tape == nullptr) {
        return nullptr;
    }
    const bool any = ((inputs.defined() && inputs.requires_grad()) || ...);
    return any ? tape : nullptr;
}

template <typename T>
std::vector<T>& ensure_grad(typename Tensor<T>::Impl& impl) {
    if (impl.grad.empty()) {
        impl.grad.assign(impl.data.size(), T(0));
    }
    return impl.grad;
}

std::size_t normalize_axis(int axis, std::size_t rank);

/// Row-major strides of `shape`.
std::vector<std::size_t> contiguous_strides(const Shape& shape);

/**
 * Broadcast layout for a binary op: output shape plus per-output-axis input
 * strides (zero along broadcast axes).
 */
struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> stride_a;
    std::vector<std::size_t> stride_b;
    bool same_shape = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b);

/// Calls fn(out_index, a_index, b_index) for every output element in order.
template <typename Fn>
void for_each_broadcast(const BroadcastPlan& plan, Fn&& fn) {
    const std::size_t rank = plan.out.size();
    const std::size_t total = shape_numel(plan.out);
    if (plan.same_shape) {
        for (std::size_t i = 0; i < total; ++i) {
            fn(i, i, i);
        }
        return;
    }
    if (rank == 0) {
        fn(0, 0, 0);
        return;
    }
    std::vector<std::size_t> counter(rank, 0);
    const std::size_t inner = plan.out[rank - 1];
    const std::size_t inner_a = plan.stride_a[rank - 1];
    const std::size_t inner_b = plan.stride_b[rank - 1];
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t o = 0; o < total; o += inner) {
        for (std::size_t j = 0; j < inner; ++j) {
            fn(o + j, ia + j * inner_a, ib + j * inner_b);
        }
        // Advance the outer counters, carrying like an odometer.
        for (std::size_t d = rank - 1; d-- > 0;) {
            ++counter[d];
            ia += plan.stride_a[d];
            ib += plan.stride_b[d];
            if (counter[d] < plan.out[d]) {
                break;
            }
            ia -= plan.stride_a[d] * plan.out[d];
            ib -= plan.stride_b[d] * plan.out[d];
            counter[d] = 0;
        }
    }
}

}  // namespace fgn::detail

#define FGN_INSTANTIATE_FOR_REALS(MACRO) \
    MACRO(float)                         \
    MACRO(double)
