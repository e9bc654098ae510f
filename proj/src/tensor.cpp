//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/tensor.hpp"

#include "htakd/errors.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace htakd {

namespace detail {

struct Node {
    std::vector<Tensor> inputs;
    BackwardFn backward;

    static const std::shared_ptr<TensorImpl>& impl_of(const Tensor& t) { return t.impl_; }
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the first backward reaches this leaf
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

Tensor::Tensor() : Tensor(Shape{}, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<detail::TensorImpl>()) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor shape " + shape_to_string(shape) + " holds " +
                             std::to_string(shape_numel(shape)) + " values, got " + std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape()));
    }
    return impl_->shape[axis];
}

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
    if (impl_->grad_fn) throw ContractError("mutable_data() on a non-leaf tensor");
    return impl_->data;
}

double Tensor::at(std::size_t i, std::size_t j) const {
    if (rank() != 2) throw DimensionError("at(i,j) needs a rank-2 tensor, got " + shape_to_string(shape()));
    return impl_->data[i * impl_->shape[1] + j];
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (impl_->grad_fn) throw ContractError("requires_grad can only be set on leaf tensors");
    impl_->requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return !impl_->grad_fn; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

Tensor Tensor::grad() const {
    if (impl_->grad.empty()) return Tensor(impl_->shape, 0.0);
    return Tensor(impl_->shape, impl_->grad);
}

std::span<const double> Tensor::grad_data() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::clone() const {
    Tensor out(impl_->shape, impl_->data);
    out.impl_->requires_grad = impl_->requires_grad;
    return out;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn backward) {
    Tensor out(std::move(shape), std::move(data));
    if (!g_grad_enabled) return out;
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (!any) return out;
    auto node = std::make_shared<detail::Node>();
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out.impl_->grad_fn = std::move(node);
    out.impl_->requires_grad = true;
    return out;
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw ContractError("backward() needs a scalar root, got shape " + shape_to_string(shape()));
    }
    if (!impl_->requires_grad) throw ContractError("backward() on a tensor that is not on a recorded graph");

    // Post-order DFS gives a topological order; reversed, every node is
    // visited after all of its consumers.
    using Impl = detail::TensorImpl;
    std::vector<Impl*> order;
    std::unordered_set<Impl*> visited;
    std::vector<std::pair<Impl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const std::size_t n_inputs = node->grad_fn ? node->grad_fn->inputs.size() : 0;
        if (next < n_inputs) {
            Impl* child = detail::Node::impl_of(node->grad_fn->inputs[next++]).get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_map<Impl*, std::vector<double>> grads;
    grads[impl_.get()] = std::vector<double>(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Impl* node = *it;
        auto found = grads.find(node);
        if (found == grads.end()) continue;
        std::vector<double> grad_out = std::move(found->second);
        grads.erase(found);

        if (!node->grad_fn) {
            if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
            for (std::size_t i = 0; i < grad_out.size(); ++i) node->grad[i] += grad_out[i];
            continue;
        }

        auto& inputs = node->grad_fn->inputs;
        std::vector<std::vector<double>> input_grads(inputs.size());
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (inputs[i].requires_grad()) input_grads[i].assign(inputs[i].numel(), 0.0);
        }
        node->grad_fn->backward(grad_out, input_grads);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (input_grads[i].empty()) continue;
            Impl* child = detail::Node::impl_of(inputs[i]).get();
            auto [slot, inserted] = grads.try_emplace(child);
            if (inserted) {
                slot->second = std::move(input_grads[i]);
            } else {
                for (std::size_t k = 0; k < slot->second.size(); ++k) slot->second[k] += input_grads[i][k];
            }
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace htakd
