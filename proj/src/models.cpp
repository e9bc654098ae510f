//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/models.hpp"

#include "htakd/container.hpp"
#include "htakd/errors.hpp"
#include "htakd/ops.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace htakd {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::kDense: return "dense";
        case LayerKind::kConv3x3: return "conv3x3";
        case LayerKind::kAvgPool: return "avgpool";
        case LayerKind::kFlatten: return "flatten";
    }
    return "unknown";
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::kNone: return "none";
        case Activation::kReLU: return "relu";
        case Activation::kLIF: return "lif";
    }
    return "unknown";
}

std::string format_layer(const LayerSpec& l) {
    std::ostringstream os;
    os << to_string(l.kind) << ' ' << l.fan_in << ' ' << l.fan_out << ' ' << l.height << ' ' << l.width << ' '
       << to_string(l.activation);
    return os.str();
}

LayerSpec parse_layer(const std::string& text) {
    std::istringstream is(text);
    std::string kind, act;
    LayerSpec l;
    if (!(is >> kind >> l.fan_in >> l.fan_out >> l.height >> l.width >> act)) {
        throw FormatError("malformed layer description '" + text + "'", 0);
    }
    if (kind == "dense") l.kind = LayerKind::kDense;
    else if (kind == "conv3x3") l.kind = LayerKind::kConv3x3;
    else if (kind == "avgpool") l.kind = LayerKind::kAvgPool;
    else if (kind == "flatten") l.kind = LayerKind::kFlatten;
    else throw FormatError("unknown layer kind '" + kind + "'", 0);
    if (act == "none") l.activation = Activation::kNone;
    else if (act == "relu") l.activation = Activation::kReLU;
    else if (act == "lif") l.activation = Activation::kLIF;
    else throw FormatError("unknown activation '" + act + "'", 0);
    return l;
}

void validate_layers(const std::vector<LayerSpec>& layers) {
    if (layers.empty()) throw ConfigError("model has no layers");
    bool spatial = false;
    bool known = false;
    std::size_t c = 0, h = 0, w = 0, features = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + format_layer(l) + "): ";
        if (l.fan_in == 0 || l.fan_out == 0) throw ConfigError(where + "zero-sized layer");
        switch (l.kind) {
            case LayerKind::kDense:
                if (known && (spatial || features != l.fan_in)) throw ConfigError(where + "input does not compose");
                spatial = false;
                features = l.fan_out;
                break;
            case LayerKind::kConv3x3:
            case LayerKind::kAvgPool:
                if (known && (!spatial || c != l.fan_in || h != l.height || w != l.width)) {
                    throw ConfigError(where + "input does not compose");
                }
                if (l.height == 0 || l.width == 0) throw ConfigError(where + "missing spatial size");
                spatial = true;
                c = l.fan_out;
                h = l.height;
                w = l.width;
                if (l.kind == LayerKind::kAvgPool) {
                    if (l.fan_in != l.fan_out || h % 2 != 0 || w % 2 != 0) throw ConfigError(where + "bad pooling");
                    h /= 2;
                    w /= 2;
                }
                break;
            case LayerKind::kFlatten:
                if (l.fan_in != l.fan_out) throw ConfigError(where + "flatten must preserve size");
                if (known && (spatial ? c * h * w : features) != l.fan_in) {
                    throw ConfigError(where + "input does not compose");
                }
                spatial = false;
                features = l.fan_out;
                break;
        }
        known = true;
    }
    const LayerSpec& last = layers.back();
    if (last.kind != LayerKind::kDense || last.activation != Activation::kNone) {
        throw ConfigError("the final layer must be a dense readout without activation");
    }
}

std::uint64_t synaptic_ops(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::kDense: return std::uint64_t{l.fan_in} * l.fan_out;
        case LayerKind::kConv3x3: return std::uint64_t{l.fan_in} * l.fan_out * 9 * l.height * l.width;
        case LayerKind::kAvgPool:
        case LayerKind::kFlatten: return 0;
    }
    return 0;
}

std::size_t Model::num_classes() const { return layers.empty() ? 0 : layers.back().fan_out; }

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : weights) out.push_back(t);
    return out;
}

std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

std::vector<LayerSpec> mlp_layers(std::size_t input_dim,
                                  const std::vector<std::size_t>& hidden,
                                  std::size_t classes,
                                  Activation hidden_act) {
    std::vector<LayerSpec> out;
    out.push_back({LayerKind::kFlatten, input_dim, input_dim, 0, 0, Activation::kNone});
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
        out.push_back({LayerKind::kDense, prev, h, 0, 0, hidden_act});
        prev = h;
    }
    out.push_back({LayerKind::kDense, prev, classes, 0, 0, Activation::kNone});
    return out;
}

std::vector<LayerSpec> convnet_layers(std::size_t channels,
                                      std::size_t height,
                                      std::size_t width,
                                      std::size_t classes,
                                      Activation hidden_act) {
    if (height % 4 != 0 || width % 4 != 0) throw ConfigError("convnet needs spatial dims divisible by 4");
    const std::size_t flat = 16 * (height / 4) * (width / 4);
    return {
        {LayerKind::kConv3x3, channels, 8, height, width, Activation::kNone},
        {LayerKind::kAvgPool, 8, 8, height, width, hidden_act},
        {LayerKind::kConv3x3, 8, 16, height / 2, width / 2, Activation::kNone},
        {LayerKind::kAvgPool, 16, 16, height / 2, width / 2, hidden_act},
        {LayerKind::kFlatten, flat, flat, 0, 0, Activation::kNone},
        {LayerKind::kDense, flat, 64, 0, 0, hidden_act},
        {LayerKind::kDense, 64, classes, 0, 0, Activation::kNone},
    };
}

std::vector<LayerSpec> with_activation(std::vector<LayerSpec> layers, Activation act) {
    for (auto& l : layers) {
        if (l.activation != Activation::kNone) l.activation = act;
    }
    return layers;
}

Model init_model(std::vector<LayerSpec> layers, std::uint64_t seed, double hidden_gain) {
    if (!(hidden_gain > 0.0)) throw ContractError("init_model: hidden_gain must be > 0");
    validate_layers(layers);
    Model model;
    model.layers = std::move(layers);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        Shape wshape;
        std::size_t fan_in = 0;
        if (l.kind == LayerKind::kDense) {
            wshape = {l.fan_in, l.fan_out};
            fan_in = l.fan_in;
        } else if (l.kind == LayerKind::kConv3x3) {
            wshape = {l.fan_out, l.fan_in, 3, 3};
            fan_in = l.fan_in * 9;
        } else {
            continue;
        }
        const double gain = i + 1 == model.layers.size() ? 1.0 : hidden_gain;
        const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> w(shape_numel(wshape));
        for (double& v : w) v = dist(rng);
        model.weights[weight_name(i)] = Tensor(std::move(wshape), std::move(w)).set_requires_grad();
        model.weights[bias_name(i)] = Tensor(Shape{l.fan_out}, 0.0).set_requires_grad();
    }
    return model;
}

Tensor apply_layer(const Model& model, std::size_t index, const Tensor& x) {
    const LayerSpec& l = model.layers.at(index);
    switch (l.kind) {
        case LayerKind::kDense: {
            if (x.rank() != 2 || x.dim(1) != l.fan_in) {
                throw DimensionError("dense layer " + std::to_string(index) + " expects [B×" +
                                     std::to_string(l.fan_in) + "], got " + shape_to_string(x.shape()));
            }
            return add_rowwise(matmul(x, model.weights.at(weight_name(index))), model.weights.at(bias_name(index)));
        }
        case LayerKind::kConv3x3:
            if (x.rank() != 4 || x.dim(1) != l.fan_in || x.dim(2) != l.height || x.dim(3) != l.width) {
                throw DimensionError("conv layer " + std::to_string(index) + " got input " +
                                     shape_to_string(x.shape()));
            }
            return conv2d_3x3(x, model.weights.at(weight_name(index)), model.weights.at(bias_name(index)));
        case LayerKind::kAvgPool:
            return avgpool2x2(x);
        case LayerKind::kFlatten: {
            if (x.rank() < 1 || x.numel() != x.dim(0) * l.fan_in) {
                throw DimensionError("flatten layer " + std::to_string(index) + " expects " +
                                     std::to_string(l.fan_in) + " features per sample, got " +
                                     shape_to_string(x.shape()));
            }
            return reshape(x, {x.dim(0), l.fan_out});
        }
    }
    throw ContractError("unknown layer kind");
}

Tensor teacher_forward(const Model& model, const Tensor& x) {
    Tensor y = x;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        y = apply_layer(model, i, y);
        switch (model.layers[i].activation) {
            case Activation::kNone: break;
            case Activation::kReLU: y = relu(y); break;
            case Activation::kLIF: throw ContractError("teacher_forward on a spiking model");
        }
    }
    return y;
}

StudentOutput student_forward(const Model& model, const Tensor& x, std::size_t timesteps, const LIFParams& lif) {
    if (timesteps == 0) throw ContractError("student_forward: timesteps must be >= 1");
    std::vector<std::size_t> spiking;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].activation == Activation::kReLU) throw ContractError("student_forward on a ReLU model");
        if (model.layers[i].activation == Activation::kLIF) spiking.push_back(i);
    }
    if (spiking.empty()) throw ContractError("student_forward: model has no LIF layers");

    // Layers [first, last] applied without activations.
    const auto run_range = [&model](std::size_t first, std::size_t last, Tensor y) {
        for (std::size_t i = first; i <= last; ++i) y = apply_layer(model, i, y);
        return y;
    };

    const Tensor encoded = run_range(0, spiking.front(), x);
    const Tensor currents = stack(std::vector<Tensor>(timesteps, encoded));

    std::vector<SynapticMap> stages;
    stages.emplace_back();
    for (std::size_t k = 1; k < spiking.size(); ++k) {
        const std::size_t first = spiking[k - 1] + 1, last = spiking[k];
        stages.emplace_back([run_range, first, last](const Tensor& s) { return run_range(first, last, s); });
    }
    UnrollResult unrolled = unroll(stages, currents, lif);

    StudentOutput out;
    std::vector<Tensor> logits;
    logits.reserve(timesteps);
    for (std::size_t t = 0; t < timesteps; ++t) {
        logits.push_back(run_range(spiking.back() + 1, model.layers.size() - 1, unrolled.states.back()[t].S));
    }
    out.logits = stack(logits);
    for (std::size_t k = 0; k < spiking.size(); ++k) {
        SpikeRecord rec;
        rec.layer_index = spiking[k];
        for (auto& st : unrolled.states[k]) rec.spikes.push_back(st.S);
        out.records.push_back(std::move(rec));
    }
    return out;
}

std::string format_metadata(const ModelCheckpoint& ckpt) {
    std::map<std::string, std::string> kv = ckpt.metadata.extra;
    kv["seed"] = std::to_string(ckpt.metadata.seed);
    kv["epoch"] = std::to_string(ckpt.metadata.epoch);
    kv["config_hash"] = ckpt.metadata.config_hash;
    kv["layers"] = std::to_string(ckpt.model.layers.size());
    for (std::size_t i = 0; i < ckpt.model.layers.size(); ++i) {
        kv["layer." + std::to_string(i)] = format_layer(ckpt.model.layers[i]);
    }
    return format_key_values(kv);
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
    Container c;
    c.metadata = format_metadata(ckpt);
    for (const auto& [name, t] : ckpt.model.weights) c.tensors.emplace(name, t.detach());
    save_container(path, c);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    Container c = load_container(path);
    auto kv = parse_key_values(c.metadata);
    ModelCheckpoint ckpt;
    const auto take = [&kv](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("checkpoint metadata lacks '" + key + "'", 12);
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    ckpt.metadata.seed = std::stoull(take("seed"));
    ckpt.metadata.epoch = std::stoull(take("epoch"));
    ckpt.metadata.config_hash = take("config_hash");
    const std::size_t n = std::stoull(take("layers"));
    for (std::size_t i = 0; i < n; ++i) ckpt.model.layers.push_back(parse_layer(take("layer." + std::to_string(i))));
    ckpt.metadata.extra = std::move(kv);
    validate_layers(ckpt.model.layers);

    for (std::size_t i = 0; i < n; ++i) {
        const LayerSpec& l = ckpt.model.layers[i];
        if (l.kind != LayerKind::kDense && l.kind != LayerKind::kConv3x3) continue;
        const Shape wshape = l.kind == LayerKind::kDense ? Shape{l.fan_in, l.fan_out} : Shape{l.fan_out, l.fan_in, 3, 3};
        for (const auto& [name, shape] : {std::pair{weight_name(i), wshape}, std::pair{bias_name(i), Shape{l.fan_out}}}) {
            auto it = c.tensors.find(name);
            if (it == c.tensors.end()) throw FormatError("checkpoint lacks tensor '" + name + "'", 0);
            if (it->second.shape() != shape) {
                throw FormatError("tensor '" + name + "' has shape " + shape_to_string(it->second.shape()) +
                                  ", expected " + shape_to_string(shape), 0);
            }
            Tensor t = it->second;
            t.set_requires_grad();
            ckpt.model.weights.emplace(name, t);
        }
    }
    if (ckpt.model.weights.size() != c.tensors.size()) throw FormatError("checkpoint holds unexpected tensors", 0);
    return ckpt;
}

}  // namespace htakd
