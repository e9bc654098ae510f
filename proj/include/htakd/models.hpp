//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/lif.hpp"
#include "htakd/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace htakd {

enum class LayerKind { kDense, kConv3x3, kAvgPool, kFlatten };
enum class Activation { kNone, kReLU, kLIF };

/// One layer of a feedforward stack. The activation is applied to this
/// layer's output.
///
/// dense:    fan_in -> fan_out features
/// conv3x3:  fan_in -> fan_out channels on a height×width map (same padding)
/// avgpool:  fan_in == fan_out channels, height×width halved
/// flatten:  fan_in == fan_out == channels·height·width of its input
struct LayerSpec {
    LayerKind kind = LayerKind::kDense;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::size_t height = 0;  // input spatial size (conv / pool / flatten)
    std::size_t width = 0;
    Activation activation = Activation::kNone;
};

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
std::string format_layer(const LayerSpec& layer);
LayerSpec parse_layer(const std::string& text);

// Throws ConfigError unless consecutive shapes compose.
void validate_layers(const std::vector<LayerSpec>& layers);

// Synaptic operations of one layer for one image and one timestep
// (multiply-accumulates in an ANN, accumulates when driven by spikes).
std::uint64_t synaptic_ops(const LayerSpec& layer);

struct Model {
    std::vector<LayerSpec> layers;
    std::map<std::string, Tensor> weights;  // "layer<i>.weight", "layer<i>.bias"

    std::size_t num_classes() const;
    std::vector<Tensor> parameters() const;
};

std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);

struct CheckpointMetadata {
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::string config_hash;
    std::map<std::string, std::string> extra;
};

struct ModelCheckpoint {
    Model model;
    CheckpointMetadata metadata;
};

// flatten -> dense(hidden...) with `hidden_act` -> dense(classes)
std::vector<LayerSpec> mlp_layers(std::size_t input_dim,
                                  const std::vector<std::size_t>& hidden,
                                  std::size_t classes,
                                  Activation hidden_act);

// conv(8) pool act -> conv(16) pool act -> flatten -> dense(64) act -> dense(classes)
std::vector<LayerSpec> convnet_layers(std::size_t channels,
                                      std::size_t height,
                                      std::size_t width,
                                      std::size_t classes,
                                      Activation hidden_act);

// Same topology with every hidden activation replaced.
std::vector<LayerSpec> with_activation(std::vector<LayerSpec> layers, Activation act);

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases. Every
// synaptic layer except the last has its bound multiplied by hidden_gain.
Model init_model(std::vector<LayerSpec> layers, std::uint64_t seed, double hidden_gain = 1.0);

// Applies layer i without its activation.
Tensor apply_layer(const Model& model, std::size_t index, const Tensor& x);

Tensor teacher_forward(const Model& model, const Tensor& x);

struct SpikeRecord {
    std::size_t layer_index = 0;  // index into Model::layers of the LIF layer
    std::vector<Tensor> spikes;   // one tensor per timestep
};

struct StudentOutput {
    Tensor logits;  // [T×B×C]
    std::vector<SpikeRecord> records;
};

/// Spiking forward pass with direct coding: the input current of the first
/// spiking layer is computed once and replayed at every timestep. The final
/// layers after the last LIF activation form a non-spiking readout whose
/// output at step t is the logits for that step.
StudentOutput student_forward(const Model& model, const Tensor& x, std::size_t timesteps, const LIFParams& lif);

std::string format_metadata(const ModelCheckpoint& checkpoint);

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& checkpoint);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace htakd
