//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/tensor.hpp"

#include <cstdint>
#include <vector>

namespace htakd {

// Matrix product of a[M×K] and b[K×N].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise arithmetic. Operands must have equal shapes, or one of them
// must hold a single element (scalar broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x / 0 follows IEEE semantics and bumps division_by_zero_count().
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, double b);
Tensor neg(const Tensor& a);

Tensor exp(const Tensor& a);
// Throws DomainError on any element <= 0.
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
// max(a, floor); the gradient passes only where a > floor.
Tensor clamp_min(const Tensor& a, double floor);

// Number of zero divisors seen by div() since process start (all threads).
std::uint64_t division_by_zero_count();

// Reductions. The axis overloads drop the reduced axis.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
// Gradient goes to the first maximal element along the axis.
Tensor max(const Tensor& a, std::size_t axis);

Tensor reshape(const Tensor& a, Shape shape);
// [B×d1×d2...] -> [B×(d1·d2·...)]
Tensor flatten_batch(const Tensor& a);
// Stacks equal-shape tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
// Sub-tensor at index i of the leading axis.
Tensor select(const Tensor& a, std::size_t index);

// Row-wise softmax over the last axis of a [B×C] tensor (max-subtracted).
Tensor softmax_rows(const Tensor& logits);
// out[b] = a[b, index[b]] for a [B×C] tensor.
Tensor pick(const Tensor& a, const std::vector<std::size_t>& index);
// x[B×N] + bias[N] broadcast over rows.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);

// 3×3 convolution, stride 1, zero padding 1. x[B×Ci×H×W], w[Co×Ci×3×3], b[Co].
Tensor conv2d_3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);
// 2×2 average pooling, stride 2. H and W must be even.
Tensor avgpool2x2(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, b); }
inline Tensor operator-(double a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace htakd
