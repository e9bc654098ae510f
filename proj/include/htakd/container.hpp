//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace htakd {

inline constexpr char kContainerMagic[4] = {'H', 'T', 'A', 'D'};
inline constexpr std::uint32_t kContainerVersion = 1;

/// Little-endian tensor container shared by checkpoints and synthetic
/// datasets:
///
///   "HTAD" | version u32 | metadata length u32 | metadata UTF-8 text
///   then, until end of file, per tensor:
///   name length u16 | name bytes | rank u8 | dims u32 × rank | f64 × numel
///
/// Records are written in name order, so the same contents always produce
/// the same bytes.
struct Container {
    std::string metadata;
    std::map<std::string, Tensor> tensors;
};

std::vector<std::uint8_t> encode_container(const Container& container);
Container decode_container(const std::vector<std::uint8_t>& bytes);

void save_container(const std::filesystem::path& path, const Container& container);
Container load_container(const std::filesystem::path& path);

// True when the file starts with the container magic.
bool is_container_file(const std::filesystem::path& path);

// Metadata text is a sequence of "key = value" lines.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string format_key_values(const std::map<std::string, std::string>& values);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace htakd
