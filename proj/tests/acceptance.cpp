//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include "htakd/analysis.hpp"
#include "htakd/cli.hpp"
#include "htakd/container.hpp"
#include "htakd/data.hpp"
#include "htakd/distill.hpp"
#include "htakd/lif.hpp"
#include "htakd/models.hpp"
#include "lif_oracle.hpp"
#include "test_util.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace htakd;
using namespace htakd::testing;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kEnergyTolMj = 1e-3;
constexpr double kIdentityTol = 1e-9;
constexpr double kLambdaSumTol = 1e-12;
constexpr double kGradRelTol = 1e-4;
constexpr double kTeacherTrainAcc = 0.90;
constexpr double kArmGap = 0.05;        // 5 accuracy points
constexpr double kNonInferiority = 0.01;  // 1 accuracy point
constexpr std::size_t kTeacherEpochs = 20;
constexpr std::size_t kMaskPairs = 100000;
constexpr std::size_t kResetSteps = 100000;

struct Verdict {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, const Verdict& v) {
    std::printf("%s %s: %s (%s)\n", id, v.pass ? "PASS" : "FAIL", title, v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// run_cli with its progress output swallowed.
int cli(std::vector<std::string> args) {
    std::ostringstream sink;
    std::streambuf* saved = std::cout.rdbuf(sink.rdbuf());
    const int code = run_cli(args);
    std::cout.rdbuf(saved);
    return code;
}

std::string slurp(const fs::path& p) {
    const auto b = read_file_bytes(p);
    return {b.begin(), b.end()};
}

std::vector<json> ndjson(const fs::path& p) {
    std::vector<json> out;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

ProbDist dist_of(const std::vector<std::vector<double>>& rows) {
    const std::size_t c = rows.front().size();
    std::vector<double> z;
    for (const auto& r : rows) {
        for (double p : r) z.push_back(std::log(p));
    }
    return softmax_with_temperature(Tensor(Shape{rows.size(), c}, z), 1.0);
}

ProbDist random_batch(std::mt19937_64& rng, std::size_t b, std::size_t c) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < b; ++i) rows.push_back(random_distribution(rng, c));
    return dist_of(rows);
}

// ---- AC1 -------------------------------------------------------------------

Verdict energy_table() {
    const auto start = std::chrono::steady_clock::now();
    const auto rows = check_published_energy(kEnergyTolMj);
    std::size_t ok = 0;
    double worst = 0.0;
    for (const auto& r : rows) {
        ok += r.ok;
        worst = std::max(worst, r.abs_diff);
    }
    const bool ex1 = std::abs(energy_mj(2.11e9, 26.68e6) - 2.02173) <= kEnergyTolMj;
    const bool ex2 = std::abs(energy_mj(198.2e6, 53.99e6) - 0.426734) <= kEnergyTolMj;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {ok == 12 && rows.size() == 12 && ex1 && ex2 && secs < 1.0,
            std::to_string(ok) + "/12 rows, worst diff " + fmt("%.3g", worst) + " mJ, " + fmt("%.3g", secs) + " s"};
}

// ---- AC2 -------------------------------------------------------------------

Verdict divergence_identities() {
    std::mt19937_64 rng(2);
    double worst = 0.0;
    std::size_t n = 0;
    for (std::size_t c : {2u, 10u, 100u}) {
        for (int trial = 0; trial < 1000; ++trial) {
            const ProbDist q = random_batch(rng, 1, c);
            for (double v : {fkl(q, q).item(), rkl(q, q).item(), kd_kl_loss(q, q).item(),
                             hta_kl_loss(q, q, 0.5).loss.item()}) {
                worst = std::max(worst, std::abs(v));
            }
            ++n;
        }
    }
    return {worst < kIdentityTol, std::to_string(n) + " distributions, max |loss| " + fmt("%.3g", worst)};
}

// ---- AC3 -------------------------------------------------------------------

Verdict mask_invariants() {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> classes(2, 20);
    std::uniform_real_distribution<double> delta(0.01, 0.99);
    std::size_t pairs = 0, violations = 0;
    NoGradGuard guard;
    while (pairs < kMaskPairs) {
        const std::size_t b = 100, c = classes(rng);
        ProbDist t = random_batch(rng, b, c);
        if (pairs % 2000 == 0) t = softmax_with_temperature(Tensor(Shape{b, c}, 0.0), 1.0);  // all ties
        const ProbDist s = random_batch(rng, b, c);
        HTAKLBreakdown br = hta_mask(t, s, delta(rng));
        hta_weights(br);
        for (std::size_t i = 0; i < b * c; ++i) {
            violations += br.head_mask[i] + br.tail_mask[i] != 1.0;
            if (i % c != 0) violations += br.sorted_teacher[i] > br.sorted_teacher[i - 1];
        }
        for (std::size_t i = 0; i < b; ++i) {
            const double h = br.lambda_head[i], l = br.lambda_tail[i];
            violations += std::abs(h + l - 1.0) > kLambdaSumTol;
            violations += !(h >= 0.0 && h <= 1.0) || !(l >= 0.0 && l <= 1.0);
        }
        pairs += b;
    }
    return {violations == 0, std::to_string(pairs) + " pairs, " + std::to_string(violations) + " violations"};
}

// ---- AC4 -------------------------------------------------------------------

Verdict reductions() {
    std::mt19937_64 rng(4);
    std::size_t mismatches = 0, trials = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t b = 1 + trial % 16, c = 2 + trial % 30;
        const ProbDist t = random_batch(rng, b, c);
        Tensor z = random_leaf(rng, {b, c}, -3.0, 3.0);
        const ProbDist s = softmax_with_temperature(z, 2.0);
        const std::vector<double> one(b, 1.0), zero(b, 0.0);

        const auto grad_of = [&](const Tensor& loss) {
            z.zero_grad();
            loss.backward();
            return std::vector<double>(z.grad_data().begin(), z.grad_data().end());
        };
        const auto same = [&](const Tensor& a, const Tensor& e) {
            const double av = a.item(), ev = e.item();
            const bool v = bitwise_equal(std::span<const double>(&av, 1), std::span<const double>(&ev, 1));
            return v && bitwise_equal(grad_of(a), grad_of(e));
        };
        mismatches += !same(weighted_kl_loss(t, s, one, zero), fkl(t, s));
        mismatches += !same(weighted_kl_loss(t, s, zero, one), rkl(t, s));
        mismatches += !same(fixed_ratio_loss(t, s, 1.0), fkl(t, s));
        mismatches += !same(fixed_ratio_loss(t, s, 0.0), rkl(t, s));
        trials += 4;
    }
    return {mismatches == 0, std::to_string(trials) + " comparisons of value and gradient, " +
                                 std::to_string(mismatches) + " differ"};
}

// ---- AC5 -------------------------------------------------------------------

Verdict gradient_fidelity() {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const ProbDist t = random_batch(rng, 8, 10);
        Tensor z = random_leaf(rng, {8, 10}, -2.0, 2.0);
        std::vector<std::size_t> labels(8);
        for (auto& y : labels) y = rng() % 10;
        HTAKLBreakdown br;
        {
            NoGradGuard guard;
            br = hta_mask(t, softmax_with_temperature(z, 2.0), 0.5);
            hta_weights(br);
        }
        const std::vector<std::function<Tensor()>> losses = {
            [&] { return cross_entropy(softmax_with_temperature(z, 1.0), labels); },
            [&] { return fkl(t, softmax_with_temperature(z, 2.0)); },
            [&] { return rkl(t, softmax_with_temperature(z, 2.0)); },
            [&] { return weighted_kl_loss(t, softmax_with_temperature(z, 2.0), br.lambda_head, br.lambda_tail); },
        };
        for (const auto& f : losses) worst = std::max(worst, check_gradients({z}, f).max_rel_err);
    }
    double lif_worst = 0.0;
    bool lif_found = true;
    std::uint64_t seed = 1;
    for (LIFParams p : {LIFParams{}, LIFParams{1.0, 0.0, 2.0, 0.5, false, SurrogateKind::kRectangular},
                        LIFParams{1.0, 0.0, 2.0, 0.5, true, SurrogateKind::kArctan}}) {
        const SurrogateCheck r = check_surrogate(p, seed);
        seed += 1000;
        lif_found = lif_found && r.found && r.forward_rel_err < 1e-12;
        lif_worst = std::max(lif_worst, r.max_rel_err);
    }
    return {worst < kGradRelTol && lif_found && lif_worst < kGradRelTol,
            "losses " + fmt("%.3g", worst) + ", LIF T=4 " + fmt("%.3g", lif_worst) + " max rel err"};
}

// ---- AC6 -------------------------------------------------------------------

Verdict lif_behaviour() {
    LIFParams p;
    const Tensor x(Shape{4, 1}, 1.5);
    const UnrollResult r = unroll({SynapticMap{}}, x, p);
    const std::vector<double> expected{0, 1, 0, 1};
    const bool train_ok = bitwise_equal(r.spikes.data(), expected);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> reset(-1.0, 0.5), thr(0.2, 2.0), tau(1.0, 5.0);
    std::size_t steps = 0, violations = 0;
    while (steps < kResetSteps) {
        LIFParams q;
        q.v_reset = reset(rng);
        q.v_th = q.v_reset + thr(rng);
        q.tau_m = tau(rng);
        const Tensor h = random_tensor(rng, {1000}, -3.0, 3.0);
        const Tensor in = random_tensor(rng, {1000}, -3.0, 6.0);
        const LIFState st = lif_step(h, in, q);
        for (std::size_t i = 0; i < 1000; ++i) {
            violations += st.S[i] != 0.0 && st.S[i] != 1.0;
            violations += st.S[i] == 1.0 && st.H[i] != q.v_reset;
        }
        steps += 1000;
    }
    return {train_ok && violations == 0,
            std::string("train ") + (train_ok ? "0101" : "wrong") + ", " + std::to_string(steps) + " steps, " +
                std::to_string(violations) + " violations"};
}

// ---- AC7 -------------------------------------------------------------------

double final_eval_accuracy(const fs::path& metrics) {
    double acc = -1.0;
    for (const auto& row : ndjson(metrics)) {
        if (row["split"] == "eval") acc = row["accuracy"].get<double>();
    }
    return acc;
}

bool all_losses_finite(const fs::path& metrics) {
    for (const auto& row : ndjson(metrics)) {
        if (!row["loss"].is_number() || !std::isfinite(row["loss"].get<double>())) return false;
    }
    return true;
}

Verdict desk_training(const fs::path& root) {
    const std::vector<std::string> arms{"ce", "kl", "hta"};
    std::map<std::string, double> arm_sum;
    bool ok = true;
    std::ostringstream detail;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const fs::path dir = root / ("seed" + std::to_string(seed));
        const std::string s = std::to_string(seed);
        if (cli({"make-blobs", "--out", (dir / "data").string(), "--format", "idx", "--classes", "10", "--per-class",
                 "200", "--test-per-class", "50", "--dim", "64", "--seed", s}) != kExitOk) {
            return {false, "make-blobs failed"};
        }
        const std::vector<std::string> data = {
            "--data",        (dir / "data" / "train-images.idx").string(), "--labels",
            (dir / "data" / "train-labels.idx").string(),                  "--test-data",
            (dir / "data" / "test-images.idx").string(),                   "--test-labels",
            (dir / "data" / "test-labels.idx").string(),                   "--seed",
            s,                                                              "--batch-size",
            "32",                                                           "--eval-threads",
            "1"};
        std::vector<std::string> teacher = {"train-teacher", "--out", (dir / "teacher").string(), "--epochs",
                                            std::to_string(kTeacherEpochs), "--lr", "0.05"};
        teacher.insert(teacher.end(), data.begin(), data.end());
        if (cli(teacher) != kExitOk) return {false, "teacher run failed for seed " + s};
        double best_train = 0.0;
        for (const auto& row : ndjson(dir / "teacher" / "metrics.ndjson")) {
            if (row["split"] == "train") best_train = std::max(best_train, row["accuracy"].get<double>());
        }
        const double teacher_acc = final_eval_accuracy(dir / "teacher" / "metrics.ndjson");
        ok = ok && best_train > kTeacherTrainAcc;
        detail << "seed " << s << ": teacher train " << fmt("%.3f", best_train) << " test " << fmt("%.3f", teacher_acc);

        for (const auto& arm : arms) {
            std::vector<std::string> args = {"distill", "--teacher", (dir / "teacher" / "teacher.htad").string(),
                                             "--out", (dir / arm).string(), "--loss", arm, "--timesteps", "2",
                                             "--epochs", "20", "--lr", "0.1"};
            args.insert(args.end(), data.begin(), data.end());
            if (cli(args) != kExitOk) return {false, arm + " run failed for seed " + s};
            const fs::path m = dir / arm / "metrics.ndjson";
            const double acc = final_eval_accuracy(m);
            ok = ok && all_losses_finite(m) && std::abs(acc - teacher_acc) <= kArmGap + 1e-12;
            arm_sum[arm] += acc;
            detail << ", " << arm << " " << fmt("%.3f", acc);
        }
        detail << "; ";
    }
    const double ce_mean = arm_sum["ce"] / 3.0, hta_mean = arm_sum["hta"] / 3.0;
    ok = ok && hta_mean >= ce_mean - kNonInferiority;
    detail << "mean ce " << fmt("%.4f", ce_mean) << " kl " << fmt("%.4f", arm_sum["kl"] / 3.0) << " hta "
           << fmt("%.4f", hta_mean);
    return {ok, detail.str()};
}

// ---- AC8 -------------------------------------------------------------------

// Shared inputs for the CLI-level checks: blobs and a short teacher.
struct SmallRun {
    fs::path root, train, test, teacher;
};

SmallRun small_run(const fs::path& root) {
    SmallRun r{root, root / "blobs" / "train.htad", root / "blobs" / "test.htad", root / "teacher" / "teacher.htad"};
    cli({"make-blobs", "--out", (root / "blobs").string(), "--classes", "4", "--per-class", "40",
         "--test-per-class", "10", "--dim", "16", "--seed", "11"});
    cli({"train-teacher", "--data", r.train.string(), "--test-data", r.test.string(), "--out",
         (root / "teacher").string(), "--epochs", "5", "--hidden", "32", "--batch-size", "16", "--lr", "0.05"});
    return r;
}

std::vector<std::string> student_args(const SmallRun& r, const std::string& command, const fs::path& out) {
    return {command, "--data", r.train.string(), "--test-data", r.test.string(), "--teacher", r.teacher.string(),
            "--out", out.string(), "--epochs", "3", "--batch-size", "16", "--seed", "5"};
}

bool same_weights(const fs::path& a, const fs::path& b) {
    const ModelCheckpoint x = load_checkpoint(a), y = load_checkpoint(b);
    if (x.model.weights.size() != y.model.weights.size()) return false;
    for (const auto& [name, t] : x.model.weights) {
        if (!bitwise_equal(t.data(), y.model.weights.at(name).data())) return false;
    }
    return true;
}

Verdict ablation(const SmallRun& r) {
    const fs::path out = r.root / "ablate";
    auto args = student_args(r, "ablate", out);
    args.insert(args.end(), {"--grid", "0,0.25,0.5,0.75,1"});
    if (cli(args) != kExitOk) return {false, "ablate command failed"};
    std::istringstream csv(slurp(out / "ablation.csv"));
    std::size_t rows = 0;
    bool finite = true;
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        ++rows;
        const std::string acc = line.substr(line.find(',') + 1, line.find(',', line.find(',') + 1) - line.find(',') - 1);
        finite = finite && std::isfinite(std::stod(acc));
    }

    bool endpoints = true;
    for (const auto& [loss, tag] : {std::pair{std::string("rkl"), std::string("0")}, std::pair{std::string("fkl"), std::string("1")}}) {
        auto solo = student_args(r, "distill", r.root / loss);
        solo.insert(solo.end(), {"--loss", loss});
        if (cli(solo) != kExitOk) return {false, loss + " run failed"};
        endpoints = endpoints && same_weights(out / ("student_r" + tag + ".htad"), r.root / loss / "student.htad");
        std::vector<json> swept;
        for (auto row : ndjson(out / "metrics.ndjson")) {
            if (row["ratio"].get<std::string>() != tag) continue;
            row.erase("ratio");
            swept.push_back(row);
        }
        endpoints = endpoints && swept == ndjson(r.root / loss / "metrics.ndjson");
    }
    return {rows == 5 && finite && endpoints, std::to_string(rows) + " points, endpoints " +
                                                  (endpoints ? "bitwise equal to rkl/fkl runs" : "differ")};
}

// ---- AC9 -------------------------------------------------------------------

// Everything in the run directory except wall-clock timings, with the output
// path stripped from the resolved config.
std::map<std::string, std::string> run_outputs(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name == "timing.ndjson") continue;
        if (name == "config.txt") {
            auto kv = parse_key_values(slurp(e.path()));
            kv.erase("out");
            out[name] = format_key_values(kv);
        } else {
            out[name] = slurp(e.path());
        }
    }
    return out;
}

Verdict determinism(const SmallRun& r) {
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"make-blobs", {"make-blobs", "--classes", "3", "--per-class", "10", "--test-per-class", "4", "--dim", "8",
                        "--seed", "9"}},
        {"train-teacher", {"train-teacher", "--data", r.train.string(), "--test-data", r.test.string(), "--epochs",
                           "2", "--hidden", "16", "--seed", "9", "--flip-prob", "0.5"}},
        {"distill", [&] {
             auto a = student_args(r, "distill", "");
             a.erase(a.begin() + 7, a.begin() + 9);
             return a;
         }()},
        {"ablate", [&] {
             auto a = student_args(r, "ablate", "");
             a.erase(a.begin() + 7, a.begin() + 9);
             a.insert(a.end(), {"--grid", "0.3,0.6"});
             return a;
         }()},
        {"analyze", {"analyze", "--checkpoint", (r.root / "rkl" / "student.htad").string(), "--data", r.test.string(),
                     "--table3-check"}},
    };
    std::size_t identical = 0, files = 0;
    std::string differing;
    for (const auto& [name, base] : commands) {
        std::map<std::string, std::string> first;
        for (int rep = 0; rep < 2; ++rep) {
            auto args = base;
            const fs::path out = r.root / "det" / (name + std::to_string(rep));
            args.insert(args.end(), {"--out", out.string()});
            if (cli(args) != kExitOk) return {false, name + " failed"};
            auto outputs = run_outputs(out);
            if (rep == 0) {
                first = std::move(outputs);
            } else if (outputs == first) {
                ++identical;
                files += outputs.size();
            } else {
                differing += " " + name;
            }
        }
    }
    return {identical == commands.size(),
            std::to_string(identical) + "/" + std::to_string(commands.size()) + " commands reproduce " +
                std::to_string(files) + " files" + (differing.empty() ? "" : ", differing:" + differing)};
}

// ---- AC10 ------------------------------------------------------------------

Verdict round_trips(const fs::path& root) {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> px(0, 255);
    std::size_t failures_seen = 0, checks = 0;
    const auto quantized = [&](Shape shape, std::size_t classes) {
        Dataset ds;
        std::vector<double> v(shape_numel(shape));
        for (double& x : v) x = px(rng) / 255.0;
        ds.images = Tensor(shape, v);
        for (std::size_t i = 0; i < shape[0]; ++i) ds.labels.push_back(rng() % classes);
        ds.labels[0] = classes - 1;
        ds.class_count = classes;
        return ds;
    };
    for (int trial = 0; trial < 20; ++trial) {
        Dataset idx = quantized({1 + static_cast<std::size_t>(trial), 1, 28, 28}, 10);
        save_idx(idx, root / "i.idx", root / "l.idx");
        Dataset back = load_idx(root / "i.idx", root / "l.idx");
        failures_seen += !bitwise_equal(back.images.data(), idx.images.data()) || back.labels != idx.labels;

        Dataset cifar = quantized({1 + static_cast<std::size_t>(trial % 4), 3, 32, 32}, 10);
        write_file_bytes(root / "c.bin", encode_cifar_binary(cifar));
        Dataset cback = load_cifar_binary(root / "c.bin");
        failures_seen += !bitwise_equal(cback.images.data(), cifar.images.data()) || cback.labels != cifar.labels;
        checks += 2;
    }
    for (const auto& layers : {mlp_layers(20, {16, 8}, 5, Activation::kLIF),
                               convnet_layers(3, 8, 8, 10, Activation::kReLU)}) {
        ModelCheckpoint ck;
        ck.model = init_model(layers, rng());
        ck.metadata = {3, 7, "0123456789abcdef", {{"role", "test"}}};
        save_checkpoint(root / "a.htad", ck);
        save_checkpoint(root / "b.htad", load_checkpoint(root / "a.htad"));
        failures_seen += read_file_bytes(root / "a.htad") != read_file_bytes(root / "b.htad");
        ++checks;
    }
    return {failures_seen == 0, std::to_string(checks) + " round trips, " + std::to_string(failures_seen) + " broken"};
}

Verdict guarded(const std::function<Verdict()>& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        return {false, std::string("threw: ") + e.what()};
    }
}

}  // namespace

int main() {
    TempDir work("acceptance");
    report("AC1", "published energy table", guarded(energy_table));
    report("AC2", "divergence identities", guarded(divergence_identities));
    report("AC3", "mask and weight invariants", guarded(mask_invariants));
    report("AC4", "loss reductions", guarded(reductions));
    report("AC5", "gradient fidelity", guarded(gradient_fidelity));
    report("AC6", "LIF behaviour", guarded(lif_behaviour));
    report("AC7", "desk-scale training", guarded([&] { return desk_training(work / "desk"); }));
    const SmallRun run = small_run(work / "small");
    report("AC8", "ablation harness", guarded([&] { return ablation(run); }));
    report("AC9", "determinism", guarded([&] { return determinism(run); }));
    fs::create_directories(work / "formats");
    report("AC10", "format round trips", guarded([&] { return round_trips(work / "formats"); }));
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
