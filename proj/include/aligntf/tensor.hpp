#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "aligntf/errors.hpp"

namespace aligntf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

template <typename Real>
struct TensorStorage {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until the first accumulation
    bool requires_grad = false;
};

/// Shared handle to a dense row-major array that may take part in
/// reverse-mode differentiation. Copies alias the same storage; use clone()
/// for a deep copy.
///
/// Rank-1 tensors of length n behave as 1 x n matrices. Higher ranks fold
/// every leading dimension into rows(), so "last dimension" ops see a matrix.
template <typename Real>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, Real fill = Real(0))
        : s_(std::make_shared<TensorStorage<Real>>()) {
        check_shape(shape);
        s_->value.assign(shape_numel(shape), fill);
        s_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<Real> values) : s_(std::make_shared<TensorStorage<Real>>()) {
        check_shape(shape);
        if (shape_numel(shape) != values.size()) {
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        s_->shape = std::move(shape);
        s_->value = std::move(values);
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Real> values) {
        return Tensor({rows, cols}, std::move(values));
    }
    static Tensor scalar(Real v) { return Tensor({1}, std::vector<Real>{v}); }

    [[nodiscard]] bool defined() const { return static_cast<bool>(s_); }
    [[nodiscard]] const Shape& shape() const { return s_->shape; }
    [[nodiscard]] std::size_t rank() const { return s_->shape.size(); }
    [[nodiscard]] std::size_t size() const { return s_->value.size(); }
    [[nodiscard]] std::size_t cols() const { return s_->shape.back(); }
    [[nodiscard]] std::size_t rows() const { return size() / cols(); }

    [[nodiscard]] std::span<Real> values() { return s_->value; }
    [[nodiscard]] std::span<const Real> values() const { return s_->value; }
    [[nodiscard]] Real* data() { return s_->value.data(); }
    [[nodiscard]] const Real* data() const { return s_->value.data(); }

    Real& at(std::size_t r, std::size_t c) { return s_->value[r * cols() + c]; }
    [[nodiscard]] Real at(std::size_t r, std::size_t c) const { return s_->value[r * cols() + c]; }
    Real& operator[](std::size_t i) { return s_->value[i]; }
    Real operator[](std::size_t i) const { return s_->value[i]; }

    [[nodiscard]] Real item() const {
        if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
        return s_->value[0];
    }

    [[nodiscard]] bool requires_grad() const { return s_ && s_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        s_->requires_grad = on;
        return *this;
    }

    [[nodiscard]] bool has_grad() const { return !s_->grad.empty(); }
    [[nodiscard]] std::span<const Real> grad() const { return s_->grad; }

    /// Gradient buffer, zero-allocated on first access. Const because the
    /// handle is shared: gradients live in the storage, not the handle.
    std::span<Real> grad_mut() const {
        if (s_->grad.empty()) s_->grad.assign(s_->value.size(), Real(0));
        return s_->grad;
    }
    void zero_grad() const {
        if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), Real(0));
    }
    void clear_grad() { std::vector<Real>().swap(s_->grad); }

    /// Deep copy of the values, detached from any graph.
    [[nodiscard]] Tensor clone() const { return Tensor(shape(), s_->value); }

    [[nodiscard]] bool same_storage(const Tensor& other) const { return s_ == other.s_; }

private:
    static void check_shape(const Shape& s) {
        if (s.empty()) throw DimensionError("tensor shape must have at least one dimension");
        for (auto d : s) {
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(s));
        }
    }

    std::shared_ptr<TensorStorage<Real>> s_;
};

/// Ordered record of executed differentiable operations.
///
/// Ops append a closure holding their saved inputs; backward() replays the
/// record in reverse, which is a valid topological order because every op is
/// recorded after its inputs exist. reset() drops the closures and with them
/// every saved intermediate.
template <typename Real>
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(BackwardFn fn) {
        if (consumed_) throw StateError("tape already consumed by backward(); call reset() first");
        entries_.push_back(std::move(fn));
    }

    void backward(Tensor<Real> loss) {
        if (consumed_) throw StateError("backward() called twice without reset()");
        if (entries_.empty()) throw StateError("backward() on an empty tape");
        if (loss.size() != 1) throw DimensionError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
        if (!loss.requires_grad()) throw StateError("loss does not depend on any parameter");
        loss.grad_mut()[0] += Real(1);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
        consumed_ = true;
    }

    void reset() {
        entries_.clear();
        entries_.shrink_to_fit();
        consumed_ = false;
    }

    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool consumed() const { return consumed_; }

    /// Tape that ops on this thread record into, or nullptr (inference).
    static Tape* active() { return active_slot(); }

private:
    template <typename>
    friend class TapeScope;
    static Tape*& active_slot() {
        thread_local Tape* slot = nullptr;
        return slot;
    }

    std::vector<BackwardFn> entries_;
    bool consumed_ = false;
};

/// Makes a tape the recording target for the current thread.
template <typename Real>
class TapeScope {
public:
    explicit TapeScope(Tape<Real>& tape) : previous_(Tape<Real>::active_slot()) {
        Tape<Real>::active_slot() = &tape;
    }
    ~TapeScope() { Tape<Real>::active_slot() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<Real>* previous_;
};

}  // namespace aligntf
