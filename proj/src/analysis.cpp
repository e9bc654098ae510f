//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/analysis.hpp"

#include "htakd/errors.hpp"

#include <cmath>
#include <cstdio>

namespace htakd {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

double firing_rate(std::span<const Tensor> spikes) {
    std::uint64_t ones = 0, total = 0;
    for (const Tensor& s : spikes) {
        for (double v : s.data()) {
            if (v == 1.0) ++ones;
            else if (v != 0.0) throw ContractError("firing_rate: spike tensor holds non-binary value " + fmt(v));
        }
        total += s.numel();
    }
    if (total == 0) throw InputError("firing_rate: no spike records");
    return static_cast<double>(ones) / static_cast<double>(total);
}

void SpikeCounter::add(const std::vector<SpikeRecord>& records) {
    if (layer_index.empty()) {
        for (const auto& r : records) layer_index.push_back(r.layer_index);
        ones.assign(records.size(), 0);
        total.assign(records.size(), 0);
    }
    if (records.size() != layer_index.size()) throw ContractError("SpikeCounter: layer count changed");
    for (std::size_t k = 0; k < records.size(); ++k) {
        for (const Tensor& s : records[k].spikes) {
            for (double v : s.data()) ones[k] += v == 1.0 ? 1 : 0;
            total[k] += s.numel();
        }
    }
}

void SpikeCounter::merge(const SpikeCounter& other) {
    if (other.empty()) return;
    if (empty()) {
        *this = other;
        return;
    }
    if (other.layer_index != layer_index) throw ContractError("SpikeCounter: merging different models");
    for (std::size_t k = 0; k < ones.size(); ++k) {
        ones[k] += other.ones[k];
        total[k] += other.total[k];
    }
}

std::vector<double> SpikeCounter::rates() const {
    std::vector<double> out;
    for (std::size_t k = 0; k < ones.size(); ++k) {
        out.push_back(total[k] == 0 ? 0.0 : static_cast<double>(ones[k]) / static_cast<double>(total[k]));
    }
    return out;
}

double SpikeCounter::readout_input_rate() const {
    if (empty()) throw InputError("no spike records");
    return rates().back();
}

OpCounts count_ops(const std::vector<LayerSpec>& layers, std::size_t timesteps, std::span<const double> layer_rates) {
    std::vector<std::size_t> spiking;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].activation == Activation::kLIF) spiking.push_back(i);
    }
    OpCounts out;
    if (spiking.empty()) {
        for (const auto& l : layers) out.macs += static_cast<double>(synaptic_ops(l));
        out.ops = out.macs;
        return out;
    }
    if (layer_rates.size() != 1 && layer_rates.size() != spiking.size()) {
        throw ContractError("count_ops: need one firing rate per LIF layer");
    }
    for (double r : layer_rates) {
        if (!(r >= 0.0 && r <= 1.0)) throw ContractError("count_ops: firing rate outside [0,1]");
    }
    const double steps = static_cast<double>(timesteps);
    std::size_t stage = 0;  // index of the LIF layer whose spikes feed layer i
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const double ops = static_cast<double>(synaptic_ops(layers[i]));
        if (i <= spiking.front()) {
            out.macs += ops;
            out.ops += ops;
        } else if (i > spiking.back()) {
            out.macs += ops * steps;
            out.ops += ops * steps;
        } else {
            while (stage + 1 < spiking.size() && spiking[stage + 1] < i) ++stage;
            const double rate = layer_rates.size() == 1 ? layer_rates[0] : layer_rates[stage];
            out.acs += rate * ops * steps;
            out.ops += ops * steps;
        }
    }
    return out;
}

OpCounts count_ops(const std::vector<LayerSpec>& layers, std::size_t timesteps, double rate) {
    return count_ops(layers, timesteps, std::span<const double>(&rate, 1));
}

double energy_mj(double acs, double macs) {
    if (acs < 0.0 || macs < 0.0) throw ContractError("energy_mj: negative operation count");
    return (acs * kAcPicojoules + macs * kMacPicojoules) * 1e-9;
}

EnergyReport make_energy_report(const OpCounts& counts, double rate) {
    return EnergyReport{counts.ops, counts.acs, counts.macs, rate, energy_mj(counts.acs, counts.macs)};
}

void write_energy_csv(std::ostream& out, const std::vector<EnergyRow>& rows) {
    out << "method,architecture,firing_rate,ops,acs,macs,energy_mj\n";
    for (const auto& r : rows) {
        out << r.method << ',' << r.architecture << ',' << fmt(r.report.firing_rate) << ',' << fmt(r.report.ops) << ','
            << fmt(r.report.acs) << ',' << fmt(r.report.macs) << ',' << fmt(r.report.energy_mj) << '\n';
    }
}

const std::vector<PublishedEnergyRow>& published_energy_rows() {
    static const std::vector<PublishedEnergyRow> rows = {
        {"KDSNN", "ResNet19", 0.2996, 9.15e9, 2.21e9, 26.68e6, 2.11173},
        {"LASNN", "ResNet19", 0.3649, 9.15e9, 2.78e9, 26.68e6, 2.62473},
        {"BKDSNN", "ResNet19", 0.2155, 9.15e9, 1.85e9, 26.68e6, 1.78773},
        {"HTA-KL", "ResNet19", 0.2744, 9.15e9, 2.11e9, 26.68e6, 2.02173},
        {"KDSNN", "ResNet20", 0.2935, 865.98e6, 213.25e6, 53.99e6, 0.440279},
        {"LASNN", "ResNet20", 0.3451, 865.98e6, 238.88e6, 53.99e6, 0.463346},
        {"BKDSNN", "ResNet20", 0.2942, 865.98e6, 214.3e6, 53.99e6, 0.441224},
        {"HTA-KL", "ResNet20", 0.2791, 865.98e6, 198.2e6, 53.99e6, 0.426734},
        {"KDSNN", "VGG16", 0.2255, 1.26e9, 196.63e6, 274.24e6, 1.438471},
        {"LASNN", "VGG16", 0.2613, 1.26e9, 217.22e6, 274.24e6, 1.457002},
        {"BKDSNN", "VGG16", 0.2369, 1.26e9, 202.53e6, 274.24e6, 1.443781},
        {"HTA-KL", "VGG16", 0.2342, 1.26e9, 199.39e6, 274.24e6, 1.440955},
    };
    return rows;
}

std::vector<EnergyCheckRow> check_published_energy(double tolerance_mj) {
    std::vector<EnergyCheckRow> out;
    for (const auto& row : published_energy_rows()) {
        EnergyCheckRow c;
        c.published = row;
        c.recomputed_mj = energy_mj(row.acs, row.macs);
        c.abs_diff = std::abs(c.recomputed_mj - row.energy_mj);
        c.ok = c.abs_diff <= tolerance_mj;
        out.push_back(c);
    }
    return out;
}

void write_energy_check_csv(std::ostream& out, const std::vector<EnergyCheckRow>& rows) {
    out << "method,architecture,acs,macs,published_mj,recomputed_mj,abs_diff_mj,match\n";
    for (const auto& r : rows) {
        out << r.published.method << ',' << r.published.architecture << ',' << fmt(r.published.acs) << ','
            << fmt(r.published.macs) << ',' << fmt(r.published.energy_mj) << ',' << fmt(r.recomputed_mj) << ','
            << fmt(r.abs_diff) << ',' << (r.ok ? "yes" : "no") << '\n';
    }
}

}  // namespace htakd
