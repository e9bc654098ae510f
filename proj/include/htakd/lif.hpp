//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/tensor.hpp"

#include <functional>
#include <vector>

namespace htakd {

enum class SurrogateKind { kRectangular, kArctan };

/// Leaky integrate-and-fire parameters.
///
/// The charge rule is V = H + (X - (H - v_reset)) / tau_m. Spikes fire when
/// V - v_th >= 0. The backward pass replaces the Heaviside derivative with a
/// surrogate of peak 1/(2·surrogate_width) and unit integral.
struct LIFParams {
    double v_th = 1.0;
    double v_reset = 0.0;
    double tau_m = 2.0;
    double surrogate_width = 0.5;
    bool detach_reset = true;
    SurrogateKind surrogate = SurrogateKind::kRectangular;

    // Throws ContractError when an invariant fails.
    void validate() const;
};

struct LIFState {
    Tensor V;  // integrated membrane potential
    Tensor H;  // post-reset potential carried to the next step
    Tensor S;  // spikes, exactly 0 or 1
};

// Surrogate derivative of the spike function evaluated at V - v_th.
Tensor heaviside_surrogate_grad(const Tensor& v_minus_th, const LIFParams& params);

// Θ(v_minus_th) forward, surrogate derivative backward.
Tensor spike_fn(const Tensor& v_minus_th, const LIFParams& params);

LIFState lif_step(const Tensor& h_prev, const Tensor& x, const LIFParams& params);

// Maps the spikes of the previous layer (or the raw input, for the first
// layer) to this layer's input current. An empty function is the identity.
using SynapticMap = std::function<Tensor(const Tensor&)>;

struct UnrollResult {
    Tensor spikes;                             // [T×B×...] from the last layer
    std::vector<std::vector<LIFState>> states;  // states[layer][t]
};

/// Runs a stack of LIF layers over inputs[t] for t = 0..T-1.
///
/// Layer n at step t receives layers[n](spikes of layer n-1 at step t); layer
/// 0 receives layers[0](inputs[t]). Membranes begin at v_reset.
UnrollResult unroll(const std::vector<SynapticMap>& layers, const Tensor& inputs, const LIFParams& params);

}  // namespace htakd
