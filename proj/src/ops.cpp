//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/ops.hpp"

#include "htakd/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace htakd {

namespace {

std::atomic<std::uint64_t> g_div_by_zero{0};

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::kSame;
    if (a.numel() == 1) return Broadcast::kLeftScalar;
    if (b.numel() == 1) return Broadcast::kRightScalar;
    throw DimensionError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " are not broadcastable");
}

// Applies f elementwise with scalar broadcasting; df returns the partial
// derivatives (d/da, d/db) at one element.
template <typename F, typename DF>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DF df) {
    const Broadcast kind = broadcast_kind(a, b, name);
    const Shape shape = kind == Broadcast::kLeftScalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(shape);
    auto ad = a.data();
    auto bd = b.data();
    const std::size_t sa = kind == Broadcast::kLeftScalar ? 0 : 1;
    const std::size_t sb = kind == Broadcast::kRightScalar ? 0 : 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[i * sa], bd[i * sb]);
    return Tensor::from_op(shape, std::move(out), {a, b},
                           [a, b, sa, sb, n, df](std::span<const double> g, std::span<std::vector<double>> gi) {
                               auto ad = a.data();
                               auto bd = b.data();
                               for (std::size_t i = 0; i < n; ++i) {
                                   const auto [da, db] = df(ad[i * sa], bd[i * sb]);
                                   if (!gi[0].empty()) gi[0][i * sa] += g[i] * da;
                                   if (!gi[1].empty()) gi[1][i * sb] += g[i] * db;
                               }
                           });
}

// Elementwise unary map with derivative df(x, y) where y = f(x).
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
    auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i]);
    std::vector<double> saved = out;
    return Tensor::from_op(a.shape(), std::move(out), {a},
                           [a, saved = std::move(saved), df](std::span<const double> g,
                                                              std::span<std::vector<double>> gi) {
                               auto ad = a.data();
                               for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * df(ad[i], saved[i]);
                           });
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                             shape_to_string(t.shape()));
    }
}

struct AxisSplit {
    std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                             shape_to_string(shape));
    }
    AxisSplit s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != axis) out.push_back(shape[i]);
    }
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: shapes " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()) +
                             " do not compose");
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto ad = a.data();
    auto bd = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &bd[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return Tensor::from_op({m, n}, std::move(out), {a, b},
                           [a, b, m, k, n](std::span<const double> g, std::span<std::vector<double>> gi) {
                               auto ad = a.data();
                               auto bd = b.data();
                               if (!gi[0].empty()) {
                                   // dA = G · Bᵀ
                                   for (std::size_t i = 0; i < m; ++i) {
                                       for (std::size_t p = 0; p < k; ++p) {
                                           double acc = 0.0;
                                           for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bd[p * n + j];
                                           gi[0][i * k + p] += acc;
                                       }
                                   }
                               }
                               if (!gi[1].empty()) {
                                   // dB = Aᵀ · G
                                   for (std::size_t i = 0; i < m; ++i) {
                                       for (std::size_t p = 0; p < k; ++p) {
                                           const double av = ad[i * k + p];
                                           if (av == 0.0) continue;
                                           for (std::size_t j = 0; j < n; ++j) gi[1][p * n + j] += av * g[i * n + j];
                                       }
                                   }
                               }
                           });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; },
                  [](double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; },
                  [](double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; },
                  [](double x, double y) { return std::pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double v : b.data()) {
        if (v == 0.0) g_div_by_zero.fetch_add(1, std::memory_order_relaxed);
    }
    return binary(a, b, "div", [](double x, double y) { return x / y; },
                  [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Tensor add(const Tensor& a, double b) {
    return unary(a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, double b) {
    return unary(a, [b](double x) { return x - b; }, [](double, double) { return 1.0; });
}

Tensor sub(double a, const Tensor& b) {
    return unary(b, [a](double x) { return a - x; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, double b) {
    return unary(a, [b](double x) { return x * b; }, [b](double, double) { return b; });
}

Tensor div(const Tensor& a, double b) {
    if (b == 0.0) g_div_by_zero.fetch_add(a.numel(), std::memory_order_relaxed);
    return unary(a, [b](double x) { return x / b; }, [b](double, double) { return 1.0 / b; });
}

Tensor neg(const Tensor& a) {
    return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    auto ad = a.data();
    for (std::size_t i = 0; i < ad.size(); ++i) {
        if (ad[i] <= 0.0) {  // NaN is left for the caller's finiteness checks
            throw DomainError("log: non-positive argument " + std::to_string(ad[i]) + " at element " +
                              std::to_string(i));
        }
    }
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
    // Written so that NaN passes through.
    return unary(a, [](double x) { return x < 0.0 ? 0.0 : x; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(a, [floor](double x) { return x < floor ? floor : x; },
                 [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

std::uint64_t division_by_zero_count() { return g_div_by_zero.load(std::memory_order_relaxed); }

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    return Tensor::from_op({}, {total}, {a}, [](std::span<const double> g, std::span<std::vector<double>> gi) {
        for (double& v : gi[0]) v += g[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ContractError("mean of an empty tensor");
    return mul(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "sum");
    auto ad = a.data();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t e = 0; e < s.extent; ++e) {
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += ad[(o * s.extent + e) * s.inner + i];
        }
    }
    return Tensor::from_op(drop_axis(a.shape(), axis), std::move(out), {a},
                           [s](std::span<const double> g, std::span<std::vector<double>> gi) {
                               for (std::size_t o = 0; o < s.outer; ++o) {
                                   for (std::size_t e = 0; e < s.extent; ++e) {
                                       for (std::size_t i = 0; i < s.inner; ++i) {
                                           gi[0][(o * s.extent + e) * s.inner + i] += g[o * s.inner + i];
                                       }
                                   }
                               }
                           });
}

Tensor mean(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "mean");
    return mul(sum(a, axis), 1.0 / static_cast<double>(s.extent));
}

Tensor max(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "max");
    if (s.extent == 0) throw ContractError("max over an empty axis");
    auto ad = a.data();
    std::vector<double> out(s.outer * s.inner);
    std::vector<std::size_t> arg(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            std::size_t best = (o * s.extent) * s.inner + i;
            for (std::size_t e = 1; e < s.extent; ++e) {
                const std::size_t idx = (o * s.extent + e) * s.inner + i;
                if (ad[idx] > ad[best]) best = idx;
            }
            out[o * s.inner + i] = ad[best];
            arg[o * s.inner + i] = best;
        }
    }
    return Tensor::from_op(drop_axis(a.shape(), axis), std::move(out), {a},
                           [arg = std::move(arg)](std::span<const double> g, std::span<std::vector<double>> gi) {
                               for (std::size_t k = 0; k < arg.size(); ++k) gi[0][arg[k]] += g[k];
                           });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return Tensor::from_op(std::move(shape), std::move(out), {a},
                           [](std::span<const double> g, std::span<std::vector<double>> gi) {
                               for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                           });
}

Tensor flatten_batch(const Tensor& a) {
    if (a.rank() < 1) throw DimensionError("flatten_batch: rank-0 tensor");
    return reshape(a, {a.dim(0), a.numel() / std::max<std::size_t>(a.dim(0), 1)});
}

Tensor stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("stack of zero tensors");
    const Shape& inner = parts.front().shape();
    for (const Tensor& p : parts) {
        if (p.shape() != inner) {
            throw DimensionError("stack: shapes " + shape_to_string(inner) + " and " + shape_to_string(p.shape()) +
                                 " differ");
        }
    }
    const std::size_t each = shape_numel(inner);
    std::vector<double> out;
    out.reserve(each * parts.size());
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    Shape shape{parts.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    return Tensor::from_op(std::move(shape), std::move(out), parts,
                           [each](std::span<const double> g, std::span<std::vector<double>> gi) {
                               for (std::size_t t = 0; t < gi.size(); ++t) {
                                   if (gi[t].empty()) continue;
                                   for (std::size_t i = 0; i < each; ++i) gi[t][i] += g[t * each + i];
                               }
                           });
}

Tensor select(const Tensor& a, std::size_t index) {
    if (a.rank() < 1 || index >= a.dim(0)) {
        throw DimensionError("select: index " + std::to_string(index) + " out of range for shape " +
                             shape_to_string(a.shape()));
    }
    Shape inner(a.shape().begin() + 1, a.shape().end());
    const std::size_t each = shape_numel(inner);
    std::vector<double> out(a.data().begin() + index * each, a.data().begin() + (index + 1) * each);
    return Tensor::from_op(std::move(inner), std::move(out), {a},
                           [index, each](std::span<const double> g, std::span<std::vector<double>> gi) {
                               for (std::size_t i = 0; i < each; ++i) gi[0][index * each + i] += g[i];
                           });
}

Tensor softmax_rows(const Tensor& logits) {
    require_rank(logits, 2, "softmax_rows");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    auto z = logits.data();
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* zr = &z[r * cols];
        double* qr = &out[r * cols];
        const double top = *std::max_element(zr, zr + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            qr[c] = std::exp(zr[c] - top);
            total += qr[c];
        }
        for (std::size_t c = 0; c < cols; ++c) qr[c] /= total;
    }
    std::vector<double> saved = out;
    return Tensor::from_op({rows, cols}, std::move(out), {logits},
                           [saved = std::move(saved), rows, cols](std::span<const double> g,
                                                                   std::span<std::vector<double>> gi) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double dot = 0.0;
                                   for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * saved[r * cols + c];
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       gi[0][r * cols + c] += saved[r * cols + c] * (g[r * cols + c] - dot);
                                   }
                               }
                           });
}

Tensor pick(const Tensor& a, const std::vector<std::size_t>& index) {
    require_rank(a, 2, "pick");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    if (index.size() != rows) {
        throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + std::to_string(rows) +
                             " rows");
    }
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        if (index[r] >= cols) {
            throw ContractError("pick: index " + std::to_string(index[r]) + " out of range [0," +
                                std::to_string(cols) + ")");
        }
        out[r] = a.data()[r * cols + index[r]];
    }
    return Tensor::from_op({rows}, std::move(out), {a},
                           [index, cols](std::span<const double> g, std::span<std::vector<double>> gi) {
                               for (std::size_t r = 0; r < index.size(); ++r) gi[0][r * cols + index[r]] += g[r];
                           });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
    require_rank(x, 2, "add_rowwise");
    if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
        throw DimensionError("add_rowwise: bias " + shape_to_string(bias.shape()) + " does not match rows of " +
                             shape_to_string(x.shape()));
    }
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<double> out(x.data().begin(), x.data().end());
    auto bd = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bd[c];
    }
    return Tensor::from_op(x.shape(), std::move(out), {x, bias},
                           [rows, cols](std::span<const double> g, std::span<std::vector<double>> gi) {
                               if (!gi[0].empty()) {
                                   for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                               }
                               if (!gi[1].empty()) {
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       for (std::size_t c = 0; c < cols; ++c) gi[1][c] += g[r * cols + c];
                                   }
                               }
                           });
}

Tensor conv2d_3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 4, "conv2d_3x3");
    if (weight.rank() != 4 || weight.dim(1) != x.dim(1) || weight.dim(2) != 3 || weight.dim(3) != 3) {
        throw DimensionError("conv2d_3x3: weight " + shape_to_string(weight.shape()) + " incompatible with input " +
                             shape_to_string(x.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
        throw DimensionError("conv2d_3x3: bias " + shape_to_string(bias.shape()) + " incompatible with weight " +
                             shape_to_string(weight.shape()));
    }
    const std::size_t batch = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3), co = weight.dim(0);
    auto xd = x.data();
    auto wd = weight.data();
    auto bd = bias.data();
    std::vector<double> out(batch * co * h * w);
    const auto in_at = [=](std::size_t b, std::size_t c, std::size_t y, std::size_t xx) {
        return ((b * ci + c) * h + y) * w + xx;
    };
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t o = 0; o < co; ++o) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    double acc = bd[o];
                    for (std::size_t c = 0; c < ci; ++c) {
                        for (std::size_t ky = 0; ky < 3; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < 3; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + kx) - 1;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += wd[((o * ci + c) * 3 + ky) * 3 + kx] *
                                       xd[in_at(b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix))];
                            }
                        }
                    }
                    out[((b * co + o) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    return Tensor::from_op(
        {batch, co, h, w}, std::move(out), {x, weight, bias},
        [x, weight, batch, ci, h, w, co, in_at](std::span<const double> g, std::span<std::vector<double>> gi) {
            auto xd = x.data();
            auto wd = weight.data();
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t o = 0; o < co; ++o) {
                    for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            const double go = g[((b * co + o) * h + y) * w + xx];
                            if (!gi[2].empty()) gi[2][o] += go;
                            if (go == 0.0) continue;
                            for (std::size_t c = 0; c < ci; ++c) {
                                for (std::size_t ky = 0; ky < 3; ++ky) {
                                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                    for (std::size_t kx = 0; kx < 3; ++kx) {
                                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + kx) - 1;
                                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                        const std::size_t xi =
                                            in_at(b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                                        const std::size_t wi = ((o * ci + c) * 3 + ky) * 3 + kx;
                                        if (!gi[0].empty()) gi[0][xi] += go * wd[wi];
                                        if (!gi[1].empty()) gi[1][wi] += go * xd[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

Tensor avgpool2x2(const Tensor& x) {
    require_rank(x, 4, "avgpool2x2");
    const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("avgpool2x2: spatial dims of " + shape_to_string(x.shape()) + " must be even");
    }
    const std::size_t oh = h / 2, ow = w / 2;
    auto xd = x.data();
    std::vector<double> out(batch * c * oh * ow);
    for (std::size_t p = 0; p < batch * c; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const std::size_t base = p * h * w + (2 * y) * w + 2 * xx;
                out[(p * oh + y) * ow + xx] = 0.25 * (xd[base] + xd[base + 1] + xd[base + w] + xd[base + w + 1]);
            }
        }
    }
    return Tensor::from_op({batch, c, oh, ow}, std::move(out), {x},
                           [batch, c, h, w, oh, ow](std::span<const double> g, std::span<std::vector<double>> gi) {
                               for (std::size_t p = 0; p < batch * c; ++p) {
                                   for (std::size_t y = 0; y < oh; ++y) {
                                       for (std::size_t xx = 0; xx < ow; ++xx) {
                                           const double q = 0.25 * g[(p * oh + y) * ow + xx];
                                           const std::size_t base = p * h * w + (2 * y) * w + 2 * xx;
                                           gi[0][base] += q;
                                           gi[0][base + 1] += q;
                                           gi[0][base + w] += q;
                                           gi[0][base + w + 1] += q;
                                       }
                                   }
                               }
                           });
}

}  // namespace htakd
