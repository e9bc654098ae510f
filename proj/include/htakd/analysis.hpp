//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/models.hpp"
#include "htakd/tensor.hpp"

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace htakd {

// 45nm energy per operation, picojoules.
inline constexpr double kAcPicojoules = 0.9;
inline constexpr double kMacPicojoules = 4.6;

struct EnergyReport {
    double ops = 0.0;
    double acs = 0.0;
    double macs = 0.0;
    double firing_rate = 0.0;
    double energy_mj = 0.0;
};

// Fraction of ones across all the given spike tensors. Throws InputError on
// empty input and ContractError on a non-binary element.
double firing_rate(std::span<const Tensor> spikes);

// Running spike counts per LIF layer, accumulated over batches.
struct SpikeCounter {
    std::vector<std::size_t> layer_index;
    std::vector<std::uint64_t> ones;
    std::vector<std::uint64_t> total;

    void add(const std::vector<SpikeRecord>& records);
    void merge(const SpikeCounter& other);
    std::vector<double> rates() const;
    // Rate of the spiking layer that feeds the readout.
    double readout_input_rate() const;
    bool empty() const { return layer_index.empty(); }
};

struct OpCounts {
    double ops = 0.0;
    double acs = 0.0;
    double macs = 0.0;
};

/// Per-image operation counts for a spiking run of `timesteps` steps.
///
/// The encoding stage (every layer up to the first LIF activation) sees the
/// real-valued image once and is counted as MACs. The readout (layers after
/// the last LIF activation) runs every step and is counted as MACs. Every
/// other synaptic layer is driven by spikes of the preceding LIF layer and
/// contributes rate · ops · timesteps ACs. `ops` is the dense-equivalent total
/// of the same schedule. A model without LIF layers counts all ops once as
/// MACs.
///
/// layer_rates holds one rate per LIF layer in order; a single value applies
/// to every layer.
OpCounts count_ops(const std::vector<LayerSpec>& layers, std::size_t timesteps, std::span<const double> layer_rates);
OpCounts count_ops(const std::vector<LayerSpec>& layers, std::size_t timesteps, double firing_rate);

// (0.9·acs + 4.6·macs) pJ expressed in mJ.
double energy_mj(double acs, double macs);

EnergyReport make_energy_report(const OpCounts& counts, double firing_rate);

struct EnergyRow {
    std::string method;
    std::string architecture;
    EnergyReport report;
};

// Header: method,architecture,firing_rate,ops,acs,macs,energy_mj
void write_energy_csv(std::ostream& out, const std::vector<EnergyRow>& rows);

struct PublishedEnergyRow {
    std::string method;
    std::string architecture;
    double firing_rate;  // fraction
    double ops;
    double acs;
    double macs;
    double energy_mj;
};

// The twelve published (method, architecture) rows of the energy comparison.
const std::vector<PublishedEnergyRow>& published_energy_rows();

struct EnergyCheckRow {
    PublishedEnergyRow published;
    double recomputed_mj = 0.0;
    double abs_diff = 0.0;
    bool ok = false;
};

std::vector<EnergyCheckRow> check_published_energy(double tolerance_mj = 1e-3);
void write_energy_check_csv(std::ostream& out, const std::vector<EnergyCheckRow>& rows);

}  // namespace htakd
