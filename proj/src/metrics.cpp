//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/metrics.hpp"

#include "htakd/errors.hpp"

#include <cstdio>
#include <json.hpp>

namespace htakd {

namespace {

using nlohmann::ordered_json;

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string csv_value(const std::optional<double>& v) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

std::ofstream open_or_throw(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace

std::string metrics_json_line(const MetricsRow& row, const std::map<std::string, std::string>& tags) {
    ordered_json j;
    for (const auto& [k, v] : tags) j[k] = v;
    j["epoch"] = row.epoch;
    j["split"] = row.split;
    j["loss"] = row.loss;
    j["ce"] = row.ce;
    j["fkl"] = optional_json(row.fkl);
    j["rkl"] = optional_json(row.rkl);
    j["distill"] = optional_json(row.distill);
    j["lambda_head_mean"] = optional_json(row.lambda_head_mean);
    j["lambda_tail_mean"] = optional_json(row.lambda_tail_mean);
    j["accuracy"] = row.accuracy;
    j["firing_rate"] = optional_json(row.firing_rate);
    return j.dump();
}

MetricsWriter::MetricsWriter(const std::filesystem::path& dir)
    : metrics_(open_or_throw(dir / "metrics.ndjson")), timing_(open_or_throw(dir / "timing.ndjson")) {}

void MetricsWriter::write(const MetricsRow& row, const std::map<std::string, std::string>& tags) {
    metrics_ << metrics_json_line(row, tags) << '\n';
    metrics_.flush();
    ordered_json t;
    for (const auto& [k, v] : tags) t[k] = v;
    t["epoch"] = row.epoch;
    t["split"] = row.split;
    t["seconds"] = row.seconds;
    timing_ << t.dump() << '\n';
    timing_.flush();
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out = open_or_throw(path);
    out << "epoch,split,loss,ce,fkl,rkl,distill,lambda_head,lambda_tail,accuracy,firing_rate\n";
    for (const auto& r : rows) {
        out << r.epoch << ',' << r.split << ',' << csv_value(r.loss) << ',' << csv_value(r.ce) << ','
            << csv_value(r.fkl) << ',' << csv_value(r.rkl) << ',' << csv_value(r.distill) << ','
            << csv_value(r.lambda_head_mean) << ',' << csv_value(r.lambda_tail_mean) << ','
            << csv_value(r.accuracy) << ',' << csv_value(r.firing_rate) << '\n';
    }
    if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace htakd
