//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace htakd {

// One JSON object per line; absent optional fields are written as null.
// Wall-clock seconds go to a separate timing stream so the metrics file is
// reproducible byte for byte.
std::string metrics_json_line(const MetricsRow& row, const std::map<std::string, std::string>& tags = {});

class MetricsWriter {
public:
    // Creates (truncates) <dir>/metrics.ndjson and <dir>/timing.ndjson.
    explicit MetricsWriter(const std::filesystem::path& dir);

    void write(const MetricsRow& row, const std::map<std::string, std::string>& tags = {});

private:
    std::ofstream metrics_;
    std::ofstream timing_;
};

// epoch,split,loss,ce,fkl,rkl,distill,lambda_head,lambda_tail,accuracy,firing_rate
void write_summary_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

}  // namespace htakd
