#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgn/errors.hpp"
#include "fgn/random.hpp"

namespace fgn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/**
 * Dense row-major tensor with optional gradient tracking.
 *
 * A Tensor is a shared handle: copies alias the same storage, like a
 * framework tensor. Operations never mutate their inputs; they return new
 * tensors and, when a Tape is active on the calling thread and any input
 * requires a gradient, record a backward closure on that tape.
 *
 * T is float for training and double for gradient checks.
 */
template <typename T>
class Tensor {
public:
    struct Impl {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;  // empty until first accumulation
        bool requires_grad = false;
    };

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, T value);
    static Tensor scalar(T value);
    static Tensor uniform(const Shape& shape, T low, T high, Rng& rng);
    static Tensor normal(const Shape& shape, T mean, T stddev, Rng& rng);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl().shape; }
    std::size_t rank() const { return impl().shape.size(); }
    std::size_t numel() const { return impl().data.size(); }
    /// Extent along `axis`; negative axes count from the back.
    std::size_t dim(int axis) const;

    std::span<const T> data() const { return impl().data; }
    std::span<T> mutable_data() { return impl().data; }
    T item() const;
    T at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const { return impl().requires_grad; }
    Tensor& set_requires_grad(bool flag = true);
    bool has_grad() const { return !impl().grad.empty(); }
    /// Gradient buffer; empty span when no gradient has been accumulated.
    std::span<const T> grad() const { return impl().grad; }
    std::span<T> mutable_grad();
    void zero_grad();

    /// Deep copy with no gradient linkage.
    Tensor detach() const;

    std::shared_ptr<Impl> handle() const { return impl_; }
    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

private:
    Impl& impl() const;
    std::shared_ptr<Impl> impl_;
};

/**
 * Ordered record of differentiable operations executed on one thread.
 *
 * Recording happens only while a TapeScope for the tape is alive. backward()
 * replays the recorded closures in reverse execution order exactly once.
 */
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(BackwardFn fn);
    void backward(const Tensor<T>& loss);

    std::size_t size() const { return ops_.size(); }
    bool consumed() const { return consumed_; }
    /// Drop all recorded ops so the tape can be reused for a new forward.
    void reset();

private:
    std::vector<BackwardFn> ops_;
    bool consumed_ = false;
};

template <typename T>
Tape<T>*& current_tape_slot() {
    thread_local Tape<T>* tape = nullptr;
    return tape;
}

template <typename T>
Tape<T>* current_tape() {
    return current_tape_slot<T>();
}

/// Makes `tape` the active tape on this thread for the scope's lifetime.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : previous_(current_tape_slot<T>()) {
        current_tape_slot<T>() = &tape;
    }
    ~TapeScope() { current_tape_slot<T>() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* previous_;
};

/// Runs reverse-mode differentiation of `loss` on the active tape.
template <typename T>
void backward(const Tensor<T>& loss);

// Elementwise binary ops with numpy-style broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T> Tensor<T> square(const Tensor<T>& x);

template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
/// Exact (erf-based) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

/// Batched matrix product over the last two axes; leading axes broadcast.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);
template <typename T> Tensor<T> transpose(const Tensor<T>& x, int axis_a, int axis_b);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x, int axis, bool keepdim = false);
template <typename T> Tensor<T> mean(const Tensor<T>& x, int axis, bool keepdim = false);

/// Max-subtracted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

/**
 * 1-D convolution over the sequence axis.
 *
 * x is [B, L, C_in], weight is [k, C_in, C_out], bias is [C_out] or undefined.
 * Causal mode pads k-1 zeros on the left so position t sees only inputs <= t;
 * otherwise padding is symmetric and k must be odd. Output is [B, L, C_out].
 */
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, bool causal);

inline constexpr double kLayerNormEpsilon = 1e-5;

/// Normalizes over the last axis with population variance, then applies gain and offset.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& offset);

/// Inverted dropout: survivors are scaled by 1/(1-rate); identity when not training.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng& rng);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace fgn
