//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace htakd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor;

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

// Receives the gradient of the op output and writes gradients for each input.
// input_grads[i] is empty when input i does not need a gradient; otherwise it
// is zero-filled with the input's size and the function accumulates into it.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double>> input_grads)>;

/// Dense row-major tensor of doubles with an optional gradient slot.
///
/// Tensor is a shared handle: copies alias the same storage. Values produced
/// by operations are never mutated afterwards, so handles with no recorded
/// graph can be shared read-only across threads. Only leaves (parameters) are
/// updated in place, through mutable_data().
class Tensor {
public:
    Tensor();  // rank-0 zero
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const;
    // In-place access for leaf tensors; throws ContractError on op results.
    std::span<double> mutable_data();
    double operator[](std::size_t flat_index) const { return data()[flat_index]; }
    double at(std::size_t i, std::size_t j) const;
    double item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);
    bool is_leaf() const;

    bool has_grad() const;
    // Gradient as a graph-free tensor of the same shape (zeros when absent).
    Tensor grad() const;
    std::span<const double> grad_data() const;
    void zero_grad();

    // Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
    // calls until zero_grad().
    void backward() const;

    // Same values, cut from the graph.
    Tensor detach() const;
    // Deep copy of values into a fresh leaf.
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    // Records an op result. When gradient recording is enabled and any input
    // requires a gradient, the result is attached to a graph node.
    static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn backward);

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<detail::TensorImpl> impl_;

    friend struct detail::Node;
};

/// RAII guard that disables graph recording on the current thread.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

}  // namespace htakd
