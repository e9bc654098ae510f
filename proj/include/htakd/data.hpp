//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace htakd {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordBytes = 3073;

struct Dataset {
    Tensor images;                    // [N×C×H×W], values in [0,1] unless standardized
    std::vector<std::size_t> labels;  // length N, each < class_count
    std::size_t class_count = 0;
    std::string split = "train";

    std::size_t size() const { return labels.size(); }
    // Throws InputError when N == 0, a label is out of range, or sizes disagree.
    void validate() const;
};

// IDX image file (N×rows×cols u8) -> [N×1×rows×cols] scaled by 1/255.
Tensor load_idx_images(const std::filesystem::path& path);
std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path);
Tensor decode_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::size_t> decode_idx_labels(const std::vector<std::uint8_t>& bytes);

// class_count == 0 infers max(label) + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t class_count = 0);

// Pixels are quantized with round(v·255) after clamping to [0,1].
std::vector<std::uint8_t> encode_idx_images(const Tensor& images);
std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::size_t>& labels);
void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels);

// CIFAR-10 binary batch: repeated [label u8 | 1024 R | 1024 G | 1024 B].
Dataset decode_cifar_binary(const std::vector<std::uint8_t>& bytes);
Dataset load_cifar_binary(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_cifar_binary(const Dataset& ds);

// Dataset stored in the tensor container ("images", "labels" tensors).
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

/// Gaussian blobs in [0,1]^dim shaped [N×1×1×dim]. Class centres are
/// 0.5 ± 1/sqrt(2·dim) per coordinate with random signs, which puts them at
/// expected pairwise distance 1; samples add N(0, noise²) and are clamped.
Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed,
                    double noise = 0.15);

// Horizontal flip with probability flip_prob, then zero-pad by crop_pad and
// crop back to the original size at a random offset. Returns a new tensor.
Tensor augment(const Tensor& batch, double flip_prob, std::size_t crop_pad, std::mt19937_64& rng);

// Samples at the given indices, in that order.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices, std::string split);
// Seeded shuffle then split so that round(fraction·N) samples go to train.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction, std::uint64_t seed);
// Keeps the first n samples (n == 0 keeps everything).
Dataset cap_samples(const Dataset& ds, std::size_t n);

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};
ChannelStats channel_stats(const Dataset& ds);
Dataset standardize(const Dataset& ds, const ChannelStats& stats);

// Images of the listed samples as one [B×C×H×W] tensor.
Tensor gather_images(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace htakd
