#include "detail.hpp"

namespace fgn {

namespace {

struct MatmulPlan {
    std::size_t m = 0, n = 0, p = 0;
    Shape out_shape;
    // Per batch entry: element offsets of the a and b matrices.
    std::vector<std::size_t> offset_a;
    std::vector<std::size_t> offset_b;
};

MatmulPlan plan_matmul(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw DimensionError("matmul needs rank >= 2 operands, got " + shape_string(a) + " and " + shape_string(b));
    }
    MatmulPlan plan;
    plan.m = a[a.size() - 2];
    plan.n = a[a.size() - 1];
    plan.p = b[b.size() - 1];
    if (b[b.size() - 2] != plan.n) {
        throw DimensionError("matmul inner extents disagree: " + shape_string(a) + " x " + shape_string(b));
    }
    const Shape batch_a(a.begin(), a.end() - 2);
    const Shape batch_b(b.begin(), b.end() - 2);
    detail::BroadcastPlan batch;
    try {
        batch = detail::plan_broadcast(batch_a, batch_b);
    } catch (const DimensionError&) {
        throw DimensionError("matmul batch extents do not broadcast: " + shape_string(a) + " x " + shape_string(b));
    }
    if (batch.same_shape) {
        batch.stride_a = detail::contiguous_strides(batch.out);
        batch.stride_b = batch.stride_a;
        batch.same_shape = false;
    }
    const std::size_t count = shape_numel(batch.out);
    plan.offset_a.resize(count);
    plan.offset_b.resize(count);
    if (batch.out.empty()) {
        plan.offset_a[0] = 0;
        plan.offset_b[0] = 0;
    } else {
        detail::for_each_broadcast(batch, [&](std::size_t o, std::size_t i, std::size_t j) {
            plan.offset_a[o] = i * plan.m * plan.n;
            plan.offset_b[o] = j * plan.n * plan.p;
        });
    }
    plan.out_shape = batch.out;
    plan.out_shape.push_back(plan.m);
    plan.out_shape.push_back(plan.p);
    return plan;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const MatmulPlan plan = plan_matmul(a.shape(), b.shape());
    const std::size_t m = plan.m, n = plan.n, p = plan.p;
    const auto va = a.data();
    const auto vb = b.data();
    std::vector<T> out(shape_numel(plan.out_shape), T(0));
    for (std::size_t batch = 0; batch < plan.offset_a.size(); ++batch) {
        const T* pa = va.data() + plan.offset_a[batch];
        const T* pb = vb.data() + plan.offset_b[batch];
        T* pc = out.data() + batch * m * p;
        for (std::size_t i = 0; i < m; ++i) {
            T* row = pc + i * p;
            for (std::size_t k = 0; k < n; ++k) {
                const T aik = pa[i * n + k];
                const T* brow = pb + k * p;
                for (std::size_t j = 0; j < p; ++j) {
                    row[j] += aik * brow[j];
                }
            }
        }
    }
    Tensor<T> y(plan.out_shape, std::move(out));
    if (auto* tape = detail::tracking<T>(a, b)) {
        y.set_requires_grad(true);
        tape->record([ai = a.handle(), bi = b.handle(), yi = y.handle(), plan] {
            const auto& gy = yi->grad;
            if (gy.empty()) {
                return;
            }
            const std::size_t m = plan.m, n = plan.n, p = plan.p;
            for (std::size_t batch = 0; batch < plan.offset_a.size(); ++batch) {
                const T* g = gy.data() + batch * m * p;
                if (ai->requires_grad) {
                    // dA = dC * B^T
                    T* ga = detail::ensure_grad<T>(*ai).data() + plan.offset_a[batch];
                    const T* pb = bi->data.data() + plan.offset_b[batch];
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t k = 0; k < n; ++k) {
                            T acc = T(0);
                            const T* brow = pb + k * p;
                            const T* grow = g + i * p;
                            for (std::size_t j = 0; j < p; ++j) {
                                acc += grow[j] * brow[j];
                            }
                            ga[i * n + k] += acc;
                        }
                    }
                }
                if (bi->requires_grad) {
                    // dB = A^T * dC
                    T* gb = detail::ensure_grad<T>(*bi).data() + plan.offset_b[batch];
                    const T* pa = ai->data.data() + plan.offset_a[batch];
                    for (std::size_t i = 0; i < m; ++i) {
                        const T* grow = g + i * p;
                        for (std::size_t k = 0; k < n; ++k) {
                            const T aik = pa[i * n + k];
                            T* gbrow = gb + k * p;
                            for (std::size_t j = 0; j < p; ++j) {
                                gbrow[j] += aik * grow[j];
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

#define FGN_INSTANTIATE(T) template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);
FGN_INSTANTIATE_FOR_REALS(FGN_INSTANTIATE)
#undef FGN_INSTANTIATE

}  // namespace fgn
