//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/cli.hpp"

#include "htakd/analysis.hpp"
#include "htakd/container.hpp"
#include "htakd/data.hpp"
#include "htakd/errors.hpp"
#include "htakd/metrics.hpp"
#include "htakd/models.hpp"
#include "htakd/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace htakd {

namespace fs = std::filesystem;

namespace {

using Config = std::map<std::string, std::string>;

struct Key {
    const char* name;
    const char* fallback;
    const char* help;
    bool is_flag = false;
};

const std::vector<Key> kDataKeys = {
    {"data", "", "training data: HTAD container, IDX images or CIFAR binary batch"},
    {"labels", "", "IDX label file paired with --data"},
    {"test_data", "", "held-out data; without it --split carves one from --data"},
    {"test_labels", "", "IDX label file paired with --test-data"},
    {"format", "auto", "auto|htad|idx|cifar"},
    {"split", "0.9", "train fraction when no --test-data is given"},
    {"max_samples", "0", "cap on samples per split (0 keeps all)"},
    {"standardize", "false", "per-channel mean/std normalisation from the train split", true},
};

const std::vector<Key> kTrainKeys = {
    {"seed", "0", "seed for initialisation, shuffling, augmentation and splitting"},
    {"epochs", "20", "training epochs"},
    {"lr", "0.01", "initial learning rate"},
    {"momentum", "0.9", "SGD momentum"},
    {"batch_size", "128", "training batch size"},
    {"eval_batch_size", "256", "evaluation batch size"},
    {"eval_threads", "1", "worker threads for evaluation"},
    {"lr_schedule", "cosine", "cosine|constant"},
    {"clip_norm", "0", "global gradient-norm clip, 0 disables"},
    {"flip_prob", "0", "horizontal flip probability"},
    {"crop_pad", "0", "zero padding for random crops"},
};

const std::vector<Key> kTeacherKeys = {
    {"arch", "mlp", "mlp|convnet"},
    {"hidden", "256,128", "hidden widths of the mlp"},
};

const std::vector<Key> kDistillKeys = {
    {"teacher", "", "teacher checkpoint"},
    {"loss", "hta", "ce|kl|fkl|rkl|hta|fixed:R"},
    {"timesteps", "2", "simulation timesteps"},
    {"alpha", "0.5", "weight of the distillation term"},
    {"tau", "2", "distillation temperature"},
    {"delta", "0.5", "cumulative-probability threshold of the head"},
    {"tau_squared", "false", "scale the distillation term by tau^2", true},
    {"init_gain", "2", "init bound multiplier of the student's hidden layers"},
};

const std::vector<Key> kLifKeys = {
    {"v_th", "1", "firing threshold"},
    {"v_reset", "0", "reset potential"},
    {"tau_m", "2", "membrane time constant"},
    {"surrogate", "rectangular", "rectangular|arctan"},
    {"surrogate_width", "0.5", "surrogate half-width"},
    {"detach_reset", "true", "exclude the reset path from the gradient"},
};

const std::vector<Key> kAblateKeys = {
    {"grid", "0,0.25,0.5,0.75,1", "head ratios to sweep"},
};

const std::vector<Key> kBlobKeys = {
    {"classes", "10", "number of classes"},
    {"per_class", "200", "training samples per class"},
    {"test_per_class", "50", "test samples per class"},
    {"dim", "64", "feature dimension"},
    {"noise", "0.15", "per-coordinate noise standard deviation"},
    {"seed", "0", "generator seed"},
    {"format", "htad", "htad|idx"},
};

std::string dashed(std::string name) {
    std::replace(name.begin(), name.end(), '_', '-');
    return name;
}

// ---- typed lookups ---------------------------------------------------------

const std::string& get(const Config& c, const std::string& key) {
    auto it = c.find(key);
    if (it == c.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

double get_double(const Config& c, const std::string& key) {
    const std::string& s = get(c, key);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        throw ConfigError("'" + key + "' expects a number, got '" + s + "'");
    }
    return v;
}

std::uint64_t get_u64(const Config& c, const std::string& key) {
    const std::string& s = get(c, key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + s + "'");
    }
    return v;
}

std::size_t get_size(const Config& c, const std::string& key) { return static_cast<std::size_t>(get_u64(c, key)); }

bool get_bool(const Config& c, const std::string& key) {
    const std::string& s = get(c, key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + s + "'");
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    for (double v : parse_grid(text)) {
        if (v < 1.0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
            throw ConfigError("'" + key + "' expects positive integers, got '" + text + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- command plumbing ------------------------------------------------------

struct Command {
    std::string name;
    CLI::App* app = nullptr;
    std::vector<Key> keys;
    std::map<std::string, std::string> flag_values;
    std::map<std::string, bool> flag_bools;
    std::string config_path;
};

void register_keys(Command& cmd, const std::vector<std::vector<Key>>& groups) {
    cmd.keys.push_back({"out", "", "output directory"});
    for (const auto& g : groups) {
        for (const auto& k : g) cmd.keys.push_back(k);
    }
    cmd.app->add_option("--config", cmd.config_path, "key = value config file; flags override it");
    for (const auto& k : cmd.keys) {
        const std::string flag = "--" + dashed(k.name);
        if (k.is_flag) {
            cmd.app->add_flag(flag, cmd.flag_bools[k.name], k.help);
        } else {
            cmd.app->add_option(flag, cmd.flag_values[k.name], k.help);
        }
    }
}

Config resolve(const Command& cmd) {
    Config c;
    for (const auto& k : cmd.keys) c[k.name] = k.fallback;
    if (!cmd.config_path.empty()) {
        std::ifstream in(cmd.config_path, std::ios::binary);
        if (!in) throw ConfigError("cannot read config file " + cmd.config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        for (const auto& [k, v] : parse_key_values(ss.str())) {
            if (k == "command") continue;
            if (!c.contains(k)) throw ConfigError("unknown config key '" + k + "' for " + cmd.name);
            c[k] = v;
        }
    }
    for (const auto& k : cmd.keys) {
        const std::string flag = "--" + dashed(k.name);
        if (cmd.app->count(flag) == 0) continue;
        c[k.name] = k.is_flag ? "true" : cmd.flag_values.at(k.name);
    }
    c["command"] = cmd.name;
    return c;
}

fs::path prepare_out(const Config& c) {
    const std::string& out = get(c, "out");
    if (out.empty()) throw ConfigError("--out is required");
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "config.txt", std::ios::binary | std::ios::trunc);
    f << format_key_values(c);
    if (!f) throw InputError("cannot write " + (fs::path(out) / "config.txt").string());
    return out;
}

// ---- data ------------------------------------------------------------------

Dataset load_any(const std::string& path, const std::string& labels, const std::string& format, std::string split) {
    if (path.empty()) throw ConfigError("--data is required");
    if (!fs::exists(path)) throw InputError("data file " + path + " does not exist");
    std::string kind = format;
    if (kind == "auto") {
        if (is_container_file(path)) kind = "htad";
        else if (!labels.empty()) kind = "idx";
        else if (fs::file_size(path) % kCifarRecordBytes == 0) kind = "cifar";
        else throw ConfigError("cannot detect the format of " + path + "; pass --format or --labels");
    }
    Dataset ds;
    if (kind == "htad") ds = load_dataset(path);
    else if (kind == "idx") {
        if (labels.empty()) throw ConfigError("IDX images need a label file");
        ds = load_idx(path, labels);
    } else if (kind == "cifar") ds = load_cifar_binary(path);
    else throw ConfigError("unknown data format '" + format + "'");
    ds.split = std::move(split);
    ds.validate();
    return ds;
}

std::pair<Dataset, Dataset> load_splits(const Config& c) {
    Dataset train = load_any(get(c, "data"), get(c, "labels"), get(c, "format"), "train");
    Dataset test;
    if (!get(c, "test_data").empty()) {
        test = load_any(get(c, "test_data"), get(c, "test_labels"), get(c, "format"), "test");
        test.class_count = std::max(test.class_count, train.class_count);
        train.class_count = test.class_count;
    } else {
        const double fraction = get_double(c, "split");
        if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split must lie in (0,1)");
        std::tie(train, test) = split_dataset(train, fraction, get_u64(c, "seed"));
        if (train.size() == 0 || test.size() == 0) throw InputError("split leaves an empty partition");
    }
    const std::size_t cap = get_size(c, "max_samples");
    train = cap_samples(train, cap);
    test = cap_samples(test, cap);
    if (get_bool(c, "standardize")) {
        const ChannelStats stats = channel_stats(train);
        train = standardize(train, stats);
        test = standardize(test, stats);
    }
    return {std::move(train), std::move(test)};
}

// ---- config -> structs -----------------------------------------------------

LIFParams lif_from(const Config& c) {
    LIFParams p;
    p.v_th = get_double(c, "v_th");
    p.v_reset = get_double(c, "v_reset");
    p.tau_m = get_double(c, "tau_m");
    p.surrogate_width = get_double(c, "surrogate_width");
    p.detach_reset = get_bool(c, "detach_reset");
    const std::string& s = get(c, "surrogate");
    if (s == "rectangular") p.surrogate = SurrogateKind::kRectangular;
    else if (s == "arctan") p.surrogate = SurrogateKind::kArctan;
    else throw ConfigError("unknown surrogate '" + s + "'");
    return p;
}

void lif_to_metadata(const Config& c, std::map<std::string, std::string>& meta) {
    for (const auto& k : kLifKeys) meta[std::string("lif.") + k.name] = get(c, k.name);
}

TrainConfig train_from(const Config& c) {
    TrainConfig t;
    t.seed = get_u64(c, "seed");
    t.epochs = get_size(c, "epochs");
    t.lr = get_double(c, "lr");
    t.momentum = get_double(c, "momentum");
    t.batch_size = get_size(c, "batch_size");
    t.eval_batch_size = get_size(c, "eval_batch_size");
    t.eval_threads = get_size(c, "eval_threads");
    const std::string& sched = get(c, "lr_schedule");
    if (sched == "cosine") t.lr_schedule = LrSchedule::kCosine;
    else if (sched == "constant") t.lr_schedule = LrSchedule::kConstant;
    else throw ConfigError("unknown lr_schedule '" + sched + "'");
    t.clip_norm = get_double(c, "clip_norm");
    t.flip_prob = get_double(c, "flip_prob");
    t.crop_pad = get_size(c, "crop_pad");
    t.config_hash = config_hash(c);
    return t;
}

void distill_into(const Config& c, TrainConfig& t) {
    const LossSpec loss = parse_loss_spec(get(c, "loss"));
    t.kd.loss_kind = loss.kind;
    t.kd.ratio = loss.ratio;
    t.kd.alpha = get_double(c, "alpha");
    t.kd.tau = get_double(c, "tau");
    t.kd.delta = get_double(c, "delta");
    t.kd.tau_squared_scaling = get_bool(c, "tau_squared");
    t.timesteps = get_size(c, "timesteps");
    t.student_init_gain = get_double(c, "init_gain");
    t.lif = lif_from(c);
    lif_to_metadata(c, t.metadata);
    t.metadata["loss_spec"] = get(c, "loss");
    t.validate();
}

std::string tag_for(const MetricsRow& row, const std::string& label) {
    std::ostringstream os;
    os << '[' << label << "] epoch " << row.epoch + 1 << ' ' << row.split << " loss " << fmt(row.loss) << " acc "
       << fmt(row.accuracy);
    if (row.firing_rate) os << " rate " << fmt(*row.firing_rate);
    return os.str();
}

MetricsSink console_and_file(MetricsWriter& writer, const std::string& label) {
    return [&writer, label](const MetricsRow& row) {
        writer.write(row);
        std::cout << tag_for(row, label) << '\n';
    };
}

ModelCheckpoint load_teacher(const Config& c) {
    const std::string& path = get(c, "teacher");
    if (path.empty()) throw ConfigError("--teacher is required");
    if (!fs::exists(path)) throw InputError("teacher checkpoint " + path + " does not exist");
    ModelCheckpoint ckpt = load_checkpoint(path);
    for (const auto& l : ckpt.model.layers) {
        if (l.activation == Activation::kLIF) throw ConfigError(path + " is a spiking checkpoint, not a teacher");
    }
    return ckpt;
}

// ---- commands --------------------------------------------------------------

int cmd_train_teacher(const Config& c) {
    auto [train, test] = load_splits(c);
    TrainConfig t = train_from(c);
    t.metadata["arch"] = get(c, "arch");
    const Shape& s = train.images.shape();
    std::vector<LayerSpec> layers;
    if (get(c, "arch") == "mlp") {
        layers = mlp_layers(s[1] * s[2] * s[3], parse_widths("hidden", get(c, "hidden")), train.class_count,
                            Activation::kReLU);
        t.metadata["hidden"] = get(c, "hidden");
    } else if (get(c, "arch") == "convnet") {
        layers = convnet_layers(s[1], s[2], s[3], train.class_count, Activation::kReLU);
    } else {
        throw ConfigError("unknown arch '" + get(c, "arch") + "'");
    }
    validate_layers(layers);
    const fs::path out = prepare_out(c);
    MetricsWriter writer(out);
    TrainResult r = train_teacher(t, layers, train, test, console_and_file(writer, "teacher"));
    write_summary_csv(out / "summary.csv", r.metrics);
    save_checkpoint(out / "teacher.htad", r.checkpoint);
    return kExitOk;
}

int cmd_distill(const Config& c) {
    const ModelCheckpoint teacher = load_teacher(c);
    auto [train, test] = load_splits(c);
    TrainConfig t = train_from(c);
    distill_into(c, t);
    const fs::path out = prepare_out(c);
    MetricsWriter writer(out);
    TrainResult r = distill_student(t, teacher, train, test, console_and_file(writer, get(c, "loss")));
    write_summary_csv(out / "summary.csv", r.metrics);
    save_checkpoint(out / "student.htad", r.checkpoint);
    return kExitOk;
}

std::string ratio_label(double r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", r);
    return buf;
}

int cmd_ablate(const Config& c) {
    const std::vector<double> grid = parse_grid(get(c, "grid"));
    const ModelCheckpoint teacher = load_teacher(c);
    auto [train, test] = load_splits(c);
    TrainConfig t = train_from(c);
    distill_into(c, t);
    const fs::path out = prepare_out(c);
    MetricsWriter writer(out);
    auto sink = [&writer](double ratio, const MetricsRow& row) {
        writer.write(row, {{"ratio", ratio_label(ratio)}});
        std::cout << tag_for(row, "fixed:" + ratio_label(ratio)) << '\n';
    };
    const auto points = ablate_ratio(t, teacher, train, test, grid, sink);
    std::ofstream csv(out / "ablation.csv", std::ios::binary | std::ios::trunc);
    csv << "ratio,accuracy,final_train_loss,final_distill\n";
    for (const auto& p : points) {
        double distill = 0.0;
        for (auto it = p.run.metrics.rbegin(); it != p.run.metrics.rend(); ++it) {
            if (it->split == "train") {
                distill = it->distill.value_or(0.0);
                break;
            }
        }
        csv << fmt(p.ratio) << ',' << fmt(p.accuracy) << ',' << fmt(p.final_train_loss) << ',' << fmt(distill) << '\n';
        save_checkpoint(out / ("student_r" + ratio_label(p.ratio) + ".htad"), p.run.checkpoint);
    }
    if (!csv) throw InputError("failed writing ablation.csv");
    return kExitOk;
}

int cmd_analyze(const Config& c) {
    const bool table3 = get_bool(c, "table3_check");
    const std::string& ckpt_path = get(c, "checkpoint");
    if (!table3 && ckpt_path.empty()) throw ConfigError("--checkpoint is required");
    const fs::path out = prepare_out(c);
    int status = kExitOk;
    if (table3) {
        const auto rows = check_published_energy(1e-3);
        std::ofstream f(out / "table3_check.csv", std::ios::binary | std::ios::trunc);
        write_energy_check_csv(f, rows);
        const auto matched = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.ok; });
        std::cout << "energy check: " << matched << "/" << rows.size() << " rows within 0.001 mJ\n";
        if (static_cast<std::size_t>(matched) != rows.size()) status = kExitFailure;
    }
    if (ckpt_path.empty()) return status;
    if (!fs::exists(ckpt_path)) throw InputError("checkpoint " + ckpt_path + " does not exist");
    const ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
    const auto& extra = ckpt.metadata.extra;
    auto from_ckpt = [&](const std::string& key, const std::string& meta_key, const std::string& fallback) {
        if (!get(c, key).empty()) return get(c, key);
        auto it = extra.find(meta_key);
        return it == extra.end() ? fallback : it->second;
    };
    Config lifc;
    for (const auto& k : kLifKeys) lifc[k.name] = from_ckpt(k.name, std::string("lif.") + k.name, k.fallback);
    Dataset ds = load_any(get(c, "data"), get(c, "labels"), get(c, "format"), "test");
    ds = cap_samples(ds, get_size(c, "max_samples"));
    if (ds.class_count != ckpt.model.num_classes()) {
        ds.class_count = std::max(ds.class_count, ckpt.model.num_classes());
        if (ds.class_count != ckpt.model.num_classes()) {
            throw ConfigError("checkpoint has " + std::to_string(ckpt.model.num_classes()) +
                              " classes but the data has " + std::to_string(ds.class_count));
        }
    }

    const bool spiking = std::any_of(ckpt.model.layers.begin(), ckpt.model.layers.end(),
                                     [](const LayerSpec& l) { return l.activation == Activation::kLIF; });
    const std::string method = extra.contains("loss_spec") ? extra.at("loss_spec") : (spiking ? "student" : "teacher");
    const std::string arch = extra.contains("arch") ? extra.at("arch") : "custom";
    EnergyRow row{method, arch, {}};
    std::ofstream rates(out / "firing_rates.csv", std::ios::binary | std::ios::trunc);
    rates << "layer_index,firing_rate\n";
    if (spiking) {
        TrainConfig t;
        t.timesteps = static_cast<std::size_t>(std::stoull(from_ckpt("timesteps", "timesteps", "2")));
        t.lif = lif_from(lifc);
        t.eval_batch_size = get_size(c, "eval_batch_size");
        t.eval_threads = get_size(c, "eval_threads");
        const EvalResult ev = evaluate_student(ckpt.model, ds, t);
        const std::vector<double> layer_rates = ev.spikes.rates();
        for (std::size_t k = 0; k < layer_rates.size(); ++k) {
            rates << ev.spikes.layer_index[k] << ',' << fmt(layer_rates[k]) << '\n';
        }
        const double overall = ev.spikes.readout_input_rate();
        row.report = make_energy_report(count_ops(ckpt.model.layers, t.timesteps, layer_rates), overall);
        std::cout << "accuracy " << fmt(ev.accuracy) << " firing_rate " << fmt(overall) << '\n';
    } else {
        const EvalResult ev = evaluate_teacher(ckpt.model, ds, get_size(c, "eval_batch_size"),
                                               get_size(c, "eval_threads"));
        row.report = make_energy_report(count_ops(ckpt.model.layers, 1, 0.0), 0.0);
        std::cout << "accuracy " << fmt(ev.accuracy) << '\n';
    }
    std::ofstream energy(out / "energy.csv", std::ios::binary | std::ios::trunc);
    write_energy_csv(energy, {row});
    std::cout << "energy_mj " << fmt(row.report.energy_mj) << " acs " << fmt(row.report.acs) << " macs "
              << fmt(row.report.macs) << '\n';
    return status;
}

int cmd_make_blobs(const Config& c) {
    const std::size_t classes = get_size(c, "classes");
    if (classes < 2) throw ConfigError("classes must be >= 2");
    const std::size_t per_class = get_size(c, "per_class");
    const std::size_t test_per_class = get_size(c, "test_per_class");
    const std::size_t dim = get_size(c, "dim");
    if (per_class == 0 || test_per_class == 0 || dim == 0) throw ConfigError("sizes must be positive");
    const double noise = get_double(c, "noise");
    const std::uint64_t seed = get_u64(c, "seed");
    // One draw keeps train and test on the same class centres.
    const Dataset all = synth_blobs(classes, per_class + test_per_class, dim, seed, noise);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < all.size(); ++i) (i / classes < per_class ? train_idx : test_idx).push_back(i);
    const Dataset train = subset(all, train_idx, "train");
    const Dataset test = subset(all, test_idx, "test");
    const fs::path out = prepare_out(c);
    const std::string& format = get(c, "format");
    if (format == "htad") {
        save_dataset(out / "train.htad", train);
        save_dataset(out / "test.htad", test);
    } else if (format == "idx") {
        save_idx(train, out / "train-images.idx", out / "train-labels.idx");
        save_idx(test, out / "test-images.idx", out / "test-labels.idx");
    } else {
        throw ConfigError("make-blobs format must be htad or idx");
    }
    return kExitOk;
}

}  // namespace

LossSpec parse_loss_spec(const std::string& text) {
    if (text == "ce") return {LossKind::kCrossEntropyOnly, 0.5};
    if (text == "kl") return {LossKind::kKL, 0.5};
    if (text == "fkl") return {LossKind::kFKL, 0.5};
    if (text == "rkl") return {LossKind::kRKL, 0.5};
    if (text == "hta") return {LossKind::kHTAKL, 0.5};
    if (text.starts_with("fixed:")) {
        const std::string r = text.substr(6);
        double v = 0.0;
        auto [p, ec] = std::from_chars(r.data(), r.data() + r.size(), v);
        if (r.empty() || ec != std::errc() || p != r.data() + r.size() || !(v >= 0.0 && v <= 1.0)) {
            throw ConfigError("fixed ratio must be a number in [0,1], got '" + r + "'");
        }
        return {LossKind::kFixedRatio, v};
    }
    throw ConfigError("unknown loss '" + text + "' (expected ce|kl|fkl|rkl|hta|fixed:R)");
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = text.find(',', start);
        std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        double v = 0.0;
        auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
            throw ConfigError("malformed list '" + text + "'");
        }
        out.push_back(v);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string config_hash(const std::map<std::string, std::string>& resolved) {
    std::map<std::string, std::string> kv = resolved;
    kv.erase("out");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : format_key_values(kv)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Head-tail aware distillation for spiking networks", "htakd"};
    app.require_subcommand(1);

    std::vector<Command> commands(5);
    commands[0].name = "train-teacher";
    commands[0].app = app.add_subcommand("train-teacher", "train a ReLU teacher with cross-entropy");
    register_keys(commands[0], {kDataKeys, kTrainKeys, kTeacherKeys});

    commands[1].name = "distill";
    commands[1].app = app.add_subcommand("distill", "train a spiking student from a teacher checkpoint");
    register_keys(commands[1], {kDataKeys, kTrainKeys, kDistillKeys, kLifKeys});

    commands[2].name = "ablate";
    commands[2].app = app.add_subcommand("ablate", "sweep fixed head/tail ratios");
    register_keys(commands[2], {kDataKeys, kTrainKeys, kDistillKeys, kLifKeys, kAblateKeys});

    commands[3].name = "analyze";
    commands[3].app = app.add_subcommand("analyze", "firing rates and energy of a checkpoint");
    {
        std::vector<Key> lif_override;
        for (const auto& k : kLifKeys) lif_override.push_back({k.name, "", k.help});
        register_keys(commands[3], {{{"checkpoint", "", "checkpoint to analyse"},
                                     {"data", "", "evaluation data"},
                                     {"labels", "", "IDX label file paired with --data"},
                                     {"format", "auto", "auto|htad|idx|cifar"},
                                     {"max_samples", "0", "cap on evaluated samples"},
                                     {"timesteps", "", "override the checkpoint's timesteps"},
                                     {"eval_batch_size", "256", "evaluation batch size"},
                                     {"eval_threads", "1", "worker threads"},
                                     {"table3_check", "false", "recompute the published energy table", true}},
                                    lif_override});
    }

    commands[4].name = "make-blobs";
    commands[4].app = app.add_subcommand("make-blobs", "write a synthetic Gaussian-blob dataset");
    register_keys(commands[4], {kBlobKeys});

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        for (auto& cmd : commands) {
            if (!cmd.app->parsed()) continue;
            const Config c = resolve(cmd);
            if (cmd.name == "train-teacher") return cmd_train_teacher(c);
            if (cmd.name == "distill") return cmd_distill(c);
            if (cmd.name == "ablate") return cmd_ablate(c);
            if (cmd.name == "analyze") return cmd_analyze(c);
            return cmd_make_blobs(c);
        }
    } catch (const NumericalError& e) {
        std::cerr << "htakd: numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const FormatError& e) {
        std::cerr << "htakd: bad file format: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "htakd: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InputError& e) {
        std::cerr << "htakd: " << e.what() << '\n';
        return kExitUsage;
    } catch (const LengthError& e) {
        std::cerr << "htakd: truncated file: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DimensionError& e) {
        std::cerr << "htakd: shape mismatch: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "htakd: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

}  // namespace htakd
