#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hdrfuse/errors.hpp"
#include "hdrfuse/rng.hpp"

namespace hdrfuse {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline Shape shape_strides(const Shape& s) {
    Shape st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
        st[i] = st[i + 1] * s[i + 1];
    }
    return st;
}

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until the first accumulation
    bool requires_grad = false;
};

// Value-semantic handle to a shared dense array. Values are immutable after
// construction except through mutable_values(), which is reserved for
// parameter initialization and optimizer updates. Gradient buffers are the
// only other mutable state.
template <typename T>
class Tensor {
public:
    using scalar_type = T;

    Tensor() = default;

    static Tensor from(Shape shape, std::vector<T> data) {
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
            throw UsageError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(data);
        return t;
    }

    static Tensor zeros(Shape shape) {
        auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), T(0)));
    }

    static Tensor full(Shape shape, T v) {
        auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), v));
    }

    static Tensor scalar(T v) { return from({}, {v}); }

    static Tensor uniform(Shape shape, Rng& rng, T lo, T hi) {
        auto n = shape_numel(shape);
        std::vector<T> d(static_cast<std::size_t>(n));
        for (auto& x : d) x = static_cast<T>(rng.uniform(lo, hi));
        return from(std::move(shape), std::move(d));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::int64_t dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

    const std::vector<T>& values() const { return node_->value; }
    std::vector<T>& mutable_values() { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        node_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (node_->grad.empty()) {
            throw UsageError("gradient requested but no backward pass reached this tensor");
        }
        return node_->grad;
    }
    // Gradient buffer, allocated to zeros on first use.
    std::vector<T>& grad_acc() {
        if (node_->grad.empty()) {
            node_->grad.assign(node_->value.size(), T(0));
        }
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), T(0));
    }
    void drop_grad() { node_->grad.clear(); }

    T item() const {
        if (numel() != 1) {
            throw UsageError("item() on non-scalar tensor of shape " + shape_str(shape()));
        }
        return node_->value[0];
    }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace hdrfuse
