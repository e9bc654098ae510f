//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/data.hpp"

#include "htakd/container.hpp"
#include "htakd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace htakd {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (b.size() < off + 4) {
        throw LengthError("IDX header truncated at byte " + std::to_string(off) + " (file is " +
                          std::to_string(b.size()) + " bytes)");
    }
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 24));
    b.push_back(static_cast<std::uint8_t>(v >> 16));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void Dataset::validate() const {
    if (labels.empty()) throw InputError("dataset is empty");
    if (images.rank() != 4 || images.dim(0) != labels.size()) {
        throw InputError("dataset images " + shape_to_string(images.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
    }
    for (std::size_t y : labels) {
        if (y >= class_count) {
            throw InputError("label " + std::to_string(y) + " outside [0," + std::to_string(class_count) + ")");
        }
    }
}

Tensor decode_idx_images(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kIdxImageMagic) throw FormatError("bad IDX image magic " + std::to_string(magic), 0);
    const std::size_t n = read_be32(bytes, 4), rows = read_be32(bytes, 8), cols = read_be32(bytes, 12);
    const std::size_t payload = n * rows * cols;
    if (bytes.size() - 16 < payload) {
        throw LengthError("IDX image payload truncated: need " + std::to_string(payload) + " bytes after header, have " +
                          std::to_string(bytes.size() - 16));
    }
    std::vector<double> data(payload);
    for (std::size_t i = 0; i < payload; ++i) data[i] = bytes[16 + i] / 255.0;
    return Tensor({n, 1, rows, cols}, std::move(data));
}

std::vector<std::size_t> decode_idx_labels(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kIdxLabelMagic) throw FormatError("bad IDX label magic " + std::to_string(magic), 0);
    const std::size_t n = read_be32(bytes, 4);
    if (bytes.size() - 8 < n) {
        throw LengthError("IDX label payload truncated: need " + std::to_string(n) + " bytes after header, have " +
                          std::to_string(bytes.size() - 8));
    }
    return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

Tensor load_idx_images(const std::filesystem::path& path) { return decode_idx_images(read_file_bytes(path)); }

std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path) {
    return decode_idx_labels(read_file_bytes(path));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t class_count) {
    Dataset ds;
    ds.images = load_idx_images(images);
    ds.labels = load_idx_labels(labels);
    if (ds.images.dim(0) != ds.labels.size()) {
        throw InputError("IDX image count " + std::to_string(ds.images.dim(0)) + " != label count " +
                         std::to_string(ds.labels.size()));
    }
    ds.class_count = class_count;
    if (class_count == 0 && !ds.labels.empty()) {
        ds.class_count = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    }
    ds.validate();
    return ds;
}

std::vector<std::uint8_t> encode_idx_images(const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != 1) {
        throw DimensionError("IDX images must be [N×1×H×W], got " + shape_to_string(images.shape()));
    }
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.numel());
    put_be32(out, kIdxImageMagic);
    put_be32(out, static_cast<std::uint32_t>(images.dim(0)));
    put_be32(out, static_cast<std::uint32_t>(images.dim(2)));
    put_be32(out, static_cast<std::uint32_t>(images.dim(3)));
    for (double v : images.data()) out.push_back(quantize(v));
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::size_t>& labels) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + labels.size());
    put_be32(out, kIdxLabelMagic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (std::size_t y : labels) {
        if (y > 255) throw ContractError("IDX labels are single bytes");
        out.push_back(static_cast<std::uint8_t>(y));
    }
    return out;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels) {
    write_file_bytes(images, encode_idx_images(ds.images));
    write_file_bytes(labels, encode_idx_labels(ds.labels));
}

Dataset decode_cifar_binary(const std::vector<std::uint8_t>& bytes) {
    if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
        throw FormatError("CIFAR binary length " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                              std::to_string(kCifarRecordBytes),
                          bytes.size() - bytes.size() % kCifarRecordBytes);
    }
    const std::size_t n = bytes.size() / kCifarRecordBytes;
    Dataset ds;
    ds.class_count = 10;
    ds.labels.resize(n);
    std::vector<double> data(n * 3072);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = i * kCifarRecordBytes;
        ds.labels[i] = bytes[base];
        for (std::size_t k = 0; k < 3072; ++k) data[i * 3072 + k] = bytes[base + 1 + k] / 255.0;
    }
    ds.images = Tensor({n, 3, 32, 32}, std::move(data));
    ds.validate();
    return ds;
}

Dataset load_cifar_binary(const std::filesystem::path& path) { return decode_cifar_binary(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_cifar_binary(const Dataset& ds) {
    const Shape want{ds.size(), 3, 32, 32};
    if (ds.images.shape() != want) {
        throw DimensionError("CIFAR images must be " + shape_to_string(want) + ", got " +
                             shape_to_string(ds.images.shape()));
    }
    std::vector<std::uint8_t> out;
    out.reserve(ds.size() * kCifarRecordBytes);
    auto px = ds.images.data();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] > 255) throw ContractError("CIFAR labels are single bytes");
        out.push_back(static_cast<std::uint8_t>(ds.labels[i]));
        for (std::size_t k = 0; k < 3072; ++k) out.push_back(quantize(px[i * 3072 + k]));
    }
    return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    Container c;
    c.metadata = format_key_values({{"class_count", std::to_string(ds.class_count)}, {"split", ds.split}});
    c.tensors.emplace("images", ds.images.detach());
    std::vector<double> labels(ds.labels.begin(), ds.labels.end());
    c.tensors.emplace("labels", Tensor::vector(std::move(labels)));
    save_container(path, c);
}

Dataset load_dataset(const std::filesystem::path& path) {
    Container c = load_container(path);
    const auto kv = parse_key_values(c.metadata);
    auto images = c.tensors.find("images");
    auto labels = c.tensors.find("labels");
    if (images == c.tensors.end() || labels == c.tensors.end() || !kv.contains("class_count")) {
        throw FormatError("container '" + path.string() + "' is not a dataset", 0);
    }
    Dataset ds;
    ds.images = images->second;
    for (double y : labels->second.data()) {
        if (y < 0 || y != std::floor(y)) throw FormatError("non-integral label in dataset container", 0);
        ds.labels.push_back(static_cast<std::size_t>(y));
    }
    ds.class_count = std::stoull(kv.at("class_count"));
    if (auto it = kv.find("split"); it != kv.end()) ds.split = it->second;
    ds.validate();
    return ds;
}

Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed, double noise) {
    if (classes < 2) throw ContractError("synth_blobs: need at least 2 classes");
    if (dim == 0 || per_class == 0) throw ContractError("synth_blobs: dim and per_class must be positive");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> gauss(0.0, noise);
    const double offset = 1.0 / std::sqrt(2.0 * static_cast<double>(dim));

    std::vector<double> centres(classes * dim);
    for (double& c : centres) c = 0.5 + (coin(rng) ? offset : -offset);

    Dataset ds;
    ds.class_count = classes;
    const std::size_t n = classes * per_class;
    std::vector<double> data(n * dim);
    ds.labels.resize(n);
    // Interleaved labels so any prefix of the dataset stays roughly balanced.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % classes;
        ds.labels[i] = k;
        for (std::size_t d = 0; d < dim; ++d) {
            data[i * dim + d] = std::clamp(centres[k * dim + d] + gauss(rng), 0.0, 1.0);
        }
    }
    ds.images = Tensor({n, 1, 1, dim}, std::move(data));
    return ds;
}

Tensor augment(const Tensor& batch, double flip_prob, std::size_t crop_pad, std::mt19937_64& rng) {
    if (batch.rank() != 4) throw DimensionError("augment expects [B×C×H×W], got " + shape_to_string(batch.shape()));
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ContractError("augment: flip_prob must lie in [0,1]");
    const std::size_t b = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    auto src = batch.data();
    std::vector<double> out(src.size(), 0.0);
    std::bernoulli_distribution flip(flip_prob);
    std::uniform_int_distribution<std::size_t> shift(0, 2 * crop_pad);
    for (std::size_t i = 0; i < b; ++i) {
        const bool mirrored = flip_prob > 0.0 && flip(rng);
        const std::size_t dy = crop_pad > 0 ? shift(rng) : 0;
        const std::size_t dx = crop_pad > 0 ? shift(rng) : 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t plane = (i * c + ch) * h * w;
            for (std::size_t y = 0; y < h; ++y) {
                // Output row y reads padded row y + dy, i.e. source row y + dy - pad.
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(crop_pad);
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t x = 0; x < w; ++x) {
                    std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + dx) - static_cast<std::ptrdiff_t>(crop_pad);
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                    if (mirrored) sx = static_cast<std::ptrdiff_t>(w) - 1 - sx;
                    out[plane + y * w + x] = src[plane + static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
                }
            }
        }
    }
    return Tensor(batch.shape(), std::move(out));
}

Tensor gather_images(const Dataset& ds, const std::vector<std::size_t>& indices) {
    const Shape& s = ds.images.shape();
    const std::size_t each = s[1] * s[2] * s[3];
    std::vector<double> out;
    out.reserve(indices.size() * each);
    auto src = ds.images.data();
    for (std::size_t idx : indices) {
        if (idx >= ds.size()) throw ContractError("gather_images: index out of range");
        out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(idx * each),
                   src.begin() + static_cast<std::ptrdiff_t>((idx + 1) * each));
    }
    return Tensor({indices.size(), s[1], s[2], s[3]}, std::move(out));
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices, std::string split) {
    Dataset out;
    out.images = gather_images(ds, indices);
    out.class_count = ds.class_count;
    out.split = std::move(split);
    out.labels.reserve(indices.size());
    for (std::size_t idx : indices) out.labels.push_back(ds.labels[idx]);
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split fraction must lie in (0,1)");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ds.size())));
    if (n_train == 0 || n_train == ds.size()) throw ConfigError("split leaves one side empty");
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return {subset(ds, train, "train"), subset(ds, test, "test")};
}

Dataset cap_samples(const Dataset& ds, std::size_t n) {
    if (n == 0 || n >= ds.size()) return ds;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return subset(ds, idx, ds.split);
}

ChannelStats channel_stats(const Dataset& ds) {
    const Shape& s = ds.images.shape();
    const std::size_t n = s[0], c = s[1], plane = s[2] * s[3];
    ChannelStats st{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    auto px = ds.images.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        double total = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < plane; ++k) {
                const double v = px[(i * c + ch) * plane + k];
                total += v;
                sq += v * v;
            }
        }
        const double count = static_cast<double>(n * plane);
        st.mean[ch] = total / count;
        st.stddev[ch] = std::sqrt(std::max(sq / count - st.mean[ch] * st.mean[ch], 0.0));
    }
    return st;
}

Dataset standardize(const Dataset& ds, const ChannelStats& st) {
    const Shape& s = ds.images.shape();
    const std::size_t n = s[0], c = s[1], plane = s[2] * s[3];
    if (st.mean.size() != c || st.stddev.size() != c) throw DimensionError("standardize: channel count mismatch");
    std::vector<double> out(ds.images.data().begin(), ds.images.data().end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double sd = st.stddev[ch] > 0.0 ? st.stddev[ch] : 1.0;
            for (std::size_t k = 0; k < plane; ++k) {
                double& v = out[(i * c + ch) * plane + k];
                v = (v - st.mean[ch]) / sd;
            }
        }
    }
    Dataset res = ds;
    res.images = Tensor(s, std::move(out));
    return res;
}

}  // namespace htakd
