//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/lif.hpp"

#include "htakd/errors.hpp"
#include "htakd/ops.hpp"

#include <cmath>
#include <numbers>

namespace htakd {

namespace {

double surrogate_at(double u, const LIFParams& p) {
    const double w = p.surrogate_width;
    switch (p.surrogate) {
        case SurrogateKind::kRectangular:
            return std::abs(u) <= w ? 1.0 / (2.0 * w) : 0.0;
        case SurrogateKind::kArctan: {
            const double s = std::numbers::pi * u / (2.0 * w);
            return (1.0 / (2.0 * w)) / (1.0 + s * s);
        }
    }
    return 0.0;
}

}  // namespace

void LIFParams::validate() const {
    if (!(v_th > v_reset)) throw ContractError("LIF: v_th must exceed v_reset");
    if (!(tau_m >= 1.0)) throw ContractError("LIF: tau_m must be >= 1");
    if (!(surrogate_width > 0.0)) throw ContractError("LIF: surrogate_width must be > 0");
}

Tensor heaviside_surrogate_grad(const Tensor& v_minus_th, const LIFParams& params) {
    std::vector<double> out(v_minus_th.numel());
    auto u = v_minus_th.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = surrogate_at(u[i], params);
    return Tensor(v_minus_th.shape(), std::move(out));
}

Tensor spike_fn(const Tensor& v_minus_th, const LIFParams& params) {
    auto u = v_minus_th.data();
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] >= 0.0 ? 1.0 : 0.0;
    return Tensor::from_op(v_minus_th.shape(), std::move(out), {v_minus_th},
                           [v_minus_th, params](std::span<const double> g, std::span<std::vector<double>> gi) {
                               auto u = v_minus_th.data();
                               for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * surrogate_at(u[i], params);
                           });
}

LIFState lif_step(const Tensor& h_prev, const Tensor& x, const LIFParams& params) {
    if (h_prev.shape() != x.shape()) {
        throw DimensionError("lif_step: membrane " + shape_to_string(h_prev.shape()) + " and input " +
                             shape_to_string(x.shape()) + " differ");
    }
    LIFState st;
    st.V = h_prev + (x - (h_prev - params.v_reset)) / params.tau_m;
    st.S = spike_fn(st.V - params.v_th, params);
    const Tensor gate = params.detach_reset ? st.S.detach() : st.S;
    st.H = gate * params.v_reset + st.V * (1.0 - gate);
    return st;
}

UnrollResult unroll(const std::vector<SynapticMap>& layers, const Tensor& inputs, const LIFParams& params) {
    params.validate();
    if (inputs.rank() < 1 || inputs.dim(0) == 0) throw ContractError("unroll: at least one timestep is required");
    if (layers.empty()) throw ContractError("unroll: empty layer stack");
    const std::size_t steps = inputs.dim(0);

    UnrollResult out;
    out.states.resize(layers.size());
    std::vector<Tensor> membrane(layers.size());
    std::vector<Tensor> last_spikes;
    last_spikes.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor signal = select(inputs, t);
        for (std::size_t n = 0; n < layers.size(); ++n) {
            const Tensor current = layers[n] ? layers[n](signal) : signal;
            if (t == 0) membrane[n] = Tensor(current.shape(), params.v_reset);
            LIFState st = lif_step(membrane[n], current, params);
            membrane[n] = st.H;
            signal = st.S;
            out.states[n].push_back(std::move(st));
        }
        last_spikes.push_back(signal);
    }
    out.spikes = stack(last_spikes);
    return out;
}

}  // namespace htakd
