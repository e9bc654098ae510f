//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/distill.hpp"

#include <map>
#include <string>
#include <vector>

namespace htakd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

// Entry point of the htakd tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

struct LossSpec {
    LossKind kind = LossKind::kHTAKL;
    double ratio = 0.5;  // only meaningful for kFixedRatio
};

// "ce", "kl", "fkl", "rkl", "hta" or "fixed:R". Throws ConfigError.
LossSpec parse_loss_spec(const std::string& text);
// Comma-separated numbers. Throws ConfigError on an empty or malformed list.
std::vector<double> parse_grid(const std::string& text);

// FNV-1a 64 over the serialized config without its output directory, as hex.
std::string config_hash(const std::map<std::string, std::string>& resolved);

}  // namespace htakd
