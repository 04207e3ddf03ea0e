#include "fgn/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "detail.hpp"

namespace fgn {

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out << ", ";
        }
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) {
        n *= extent;
    }
    return n;
}

namespace detail {

std::size_t normalize_axis(int axis, std::size_t rank) {
    const long long r = static_cast<long long>(rank);
    const long long a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t d = shape.size(); d-- > 1;) {
        strides[d - 1] = strides[d] * shape[d];
    }
    return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    if (a == b) {
        plan.out = a;
        plan.same_shape = true;
        return plan;
    }
    const std::size_t rank = std::max(a.size(), b.size());
    plan.out.assign(rank, 1);
    plan.stride_a.assign(rank, 0);
    plan.stride_b.assign(rank, 0);
    const auto strides_a = contiguous_strides(a);
    const auto strides_b = contiguous_strides(b);
    for (std::size_t d = 0; d < rank; ++d) {
        const std::size_t offset_a = rank - a.size();
        const std::size_t offset_b = rank - b.size();
        const std::size_t ea = d >= offset_a ? a[d - offset_a] : 1;
        const std::size_t eb = d >= offset_b ? b[d - offset_b] : 1;
        if (ea != eb && ea != 1 && eb != 1) {
            throw DimensionError("cannot broadcast shapes " + shape_string(a) + " and " + shape_string(b));
        }
        plan.out[d] = std::max(ea, eb);
        plan.stride_a[d] = (ea == 1 || d < offset_a) ? 0 : strides_a[d - offset_a];
        plan.stride_b[d] = (eb == 1 || d < offset_b) ? 0 : strides_b[d - offset_b];
    }
    return plan;
}

}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("shape " + shape_string(shape) + " holds " + std::to_string(shape_numel(shape)) +
                             " values but " + std::to_string(data.size()) + " were given");
    }
    for (std::size_t extent : shape) {
        if (extent == 0) {
            throw DimensionError("zero extent in shape " + shape_string(shape));
        }
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape) {
    return full(shape, T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
    return Tensor(shape, std::vector<T>(shape_numel(shape), value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
    return Tensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::uniform(const Shape& shape, T low, T high, Rng& rng) {
    std::vector<T> values(shape_numel(shape));
    for (auto& v : values) {
        v = static_cast<T>(rng.uniform(low, high));
    }
    return Tensor(shape, std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::normal(const Shape& shape, T mean, T stddev, Rng& rng) {
    std::vector<T> values(shape_numel(shape));
    for (auto& v : values) {
        v = static_cast<T>(mean + stddev * rng.normal());
    }
    return Tensor(shape, std::move(values));
}

template <typename T>
typename Tensor<T>::Impl& Tensor<T>::impl() const {
    if (!impl_) {
        throw UsageError("use of an undefined tensor");
    }
    return *impl_;
}

template <typename T>
std::size_t Tensor<T>::dim(int axis) const {
    return shape()[detail::normalize_axis(axis, rank())];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw UsageError("item() on tensor of shape " + shape_string(shape()));
    }
    return impl().data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.size()) {
        throw DimensionError("index rank " + std::to_string(index.size()) + " vs tensor rank " +
                             std::to_string(s.size()));
    }
    std::size_t flat = 0;
    std::size_t d = 0;
    for (std::size_t i : index) {
        if (i >= s[d]) {
            throw DimensionError("index out of range along axis " + std::to_string(d));
        }
        flat = flat * s[d] + i;
        ++d;
    }
    return impl().data[flat];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
    impl().requires_grad = flag;
    return *this;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
    return detail::ensure_grad<T>(impl());
}

template <typename T>
void Tensor<T>::zero_grad() {
    auto& g = impl().grad;
    std::fill(g.begin(), g.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(shape(), impl().data);
}

template <typename T>
void Tape<T>::record(BackwardFn fn) {
    if (consumed_) {
        throw UsageError("recording onto a consumed tape; call reset() first");
    }
    ops_.push_back(std::move(fn));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) {
        throw UsageError("backward called twice on the same tape");
    }
    if (loss.numel() != 1) {
        throw UsageError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw UsageError("loss does not depend on any tensor that requires grad");
    }
    auto impl = loss.handle();
    detail::ensure_grad<T>(*impl)[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        (*it)();
    }
    ops_.clear();
    consumed_ = true;
}

template <typename T>
void Tape<T>::reset() {
    ops_.clear();
    consumed_ = false;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    Tape<T>* tape = current_tape<T>();
    if (tape == nullptr) {
        throw UsageError("backward called with no active tape");
    }
    tape->backward(loss);
}

#define FGN_INSTANTIATE(T)      \
    template class Tensor<T>;   \
    template class Tape<T>;     \
    template void backward<T>(const Tensor<T>&);
FGN_INSTANTIATE_FOR_REALS(FGN_INSTANTIATE)
#undef FGN_INSTANTIATE

}  // namespace fgn
