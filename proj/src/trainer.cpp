//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/trainer.hpp"

#include "htakd/errors.hpp"
#include "htakd/ops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

namespace htakd {

namespace {

constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kAugmentStream = 0xD1B54A32D192ED03ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::vector<std::size_t> labels_of(const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(ds.labels[i]);
    return out;
}

std::size_t count_correct(const Tensor& q, const std::vector<std::size_t>& labels) {
    const std::size_t classes = q.dim(1);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        auto row = q.data().subspan(r * classes, classes);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        correct += best == labels[r] ? 1 : 0;
    }
    return correct;
}

ProbDist detached(const ProbDist& p) { return ProbDist{p.Z.detach(), p.Q.detach(), p.tau}; }

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Tensor batch_input(const Dataset& ds, const std::vector<std::size_t>& idx, const TrainConfig& cfg,
                   std::mt19937_64& rng) {
    Tensor x = gather_images(ds, idx);
    if (cfg.flip_prob > 0.0 || cfg.crop_pad > 0) x = augment(x, cfg.flip_prob, cfg.crop_pad, rng);
    return x;
}

void require_finite(double loss, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(loss)) {
        throw NumericalError("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch));
    }
}

// Runs fn(batch_index) over all batches using up to `threads` workers.
template <typename Fn>
void for_each_batch(std::size_t n_batches, std::size_t threads, Fn fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n_batches));
    if (threads == 1) {
        for (std::size_t b = 0; b < n_batches; ++b) fn(b);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t b = w; b < n_batches; b += threads) fn(b);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

struct BatchEval {
    std::size_t n = 0;
    std::size_t correct = 0;
    double ce = 0.0;
    double fkl = 0.0;
    double rkl = 0.0;
    double lambda_head = 0.0;
    double lambda_tail = 0.0;
    SpikeCounter spikes;
};

std::map<std::string, std::string> checkpoint_extra(const TrainConfig& cfg, const std::string& role) {
    std::map<std::string, std::string> extra = cfg.metadata;
    extra["role"] = role;
    extra["lr_schedule"] = cfg.lr_schedule == LrSchedule::kCosine ? "cosine" : "constant";
    if (role == "student") {
        extra["loss"] = to_string(cfg.kd.loss_kind);
        extra["timesteps"] = std::to_string(cfg.timesteps);
    }
    return extra;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
    if (timesteps < 1) throw ConfigError("timesteps must be >= 1");
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
    if (!(student_init_gain > 0.0)) throw ConfigError("student_init_gain must be > 0");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0,1]");
    kd.validate();
    try {
        lif.validate();
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
    if (cfg.lr_schedule == LrSchedule::kConstant) return cfg.lr;
    const double progress = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_momentum_step(std::span<double> w, std::span<const double> g, std::span<double> v, double lr,
                       double momentum) {
    if (w.size() != g.size() || w.size() != v.size()) {
        throw ContractError("sgd_momentum_step: weights, grads and velocity differ in size");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum * v[i] + g[i];
        w[i] -= lr * v[i];
    }
}

SgdMomentum::SgdMomentum(const Model& model) {
    for (const auto& [name, t] : model.weights) velocity_[name].assign(t.numel(), 0.0);
}

void SgdMomentum::step(Model& model, double lr, double momentum, double clip_norm) {
    double scale = 1.0;
    if (clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& [name, t] : model.weights) {
            for (double g : t.grad_data()) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > clip_norm) scale = clip_norm / norm;
    }
    for (auto& [name, t] : model.weights) {
        auto& vel = velocity_.at(name);
        if (!t.has_grad()) {
            std::vector<double> zeros(t.numel(), 0.0);
            sgd_momentum_step(t.mutable_data(), zeros, vel, lr, momentum);
            continue;
        }
        if (scale == 1.0) {
            sgd_momentum_step(t.mutable_data(), t.grad_data(), vel, lr, momentum);
        } else {
            std::vector<double> g(t.grad_data().begin(), t.grad_data().end());
            for (double& x : g) x *= scale;
            sgd_momentum_step(t.mutable_data(), g, vel, lr, momentum);
        }
        t.zero_grad();
    }
}

EvalResult evaluate_teacher(const Model& teacher, const Dataset& ds, std::size_t batch_size, std::size_t threads) {
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batches = make_batches(order, batch_size);
    std::vector<BatchEval> parts(batches.size());
    for_each_batch(batches.size(), threads, [&](std::size_t b) {
        NoGradGuard guard;
        const auto labels = labels_of(ds, batches[b]);
        const ProbDist q = softmax_with_temperature(teacher_forward(teacher, gather_images(ds, batches[b])), 1.0);
        parts[b].n = labels.size();
        parts[b].correct = count_correct(q.Q, labels);
        parts[b].ce = cross_entropy(q, labels).item() * static_cast<double>(labels.size());
    });
    EvalResult out;
    std::size_t n = 0, correct = 0;
    for (const auto& p : parts) {
        n += p.n;
        correct += p.correct;
        out.ce += p.ce;
    }
    out.ce /= static_cast<double>(n);
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return out;
}

EvalResult evaluate_student(const Model& student, const Dataset& ds, const TrainConfig& cfg, const Model* teacher) {
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batches = make_batches(order, cfg.eval_batch_size);
    std::vector<BatchEval> parts(batches.size());
    for_each_batch(batches.size(), cfg.eval_threads, [&](std::size_t b) {
        NoGradGuard guard;
        const auto labels = labels_of(ds, batches[b]);
        const Tensor x = gather_images(ds, batches[b]);
        const StudentOutput so = student_forward(student, x, cfg.timesteps, cfg.lif);
        const ProbDist avg1 = temporal_softmax(so.logits, 1.0).averaged;
        BatchEval& p = parts[b];
        const double n = static_cast<double>(labels.size());
        p.n = labels.size();
        p.correct = count_correct(avg1.Q, labels);
        p.ce = cross_entropy(avg1, labels).item() * n;
        p.spikes.add(so.records);
        if (teacher) {
            const ProbDist qt = softmax_with_temperature(teacher_forward(*teacher, x), cfg.kd.tau);
            const ProbDist qs = temporal_softmax(so.logits, cfg.kd.tau).averaged;
            p.fkl = fkl(qt, qs).item() * n;
            p.rkl = rkl(qt, qs).item() * n;
            HTAKLBreakdown br = hta_mask(qt, qs, cfg.kd.delta);
            hta_weights(br);
            p.lambda_head = mean_of(br.lambda_head) * n;
            p.lambda_tail = mean_of(br.lambda_tail) * n;
        }
    });
    EvalResult out;
    std::size_t n = 0, correct = 0;
    double f = 0.0, r = 0.0, lh = 0.0, lt = 0.0;
    for (const auto& p : parts) {
        n += p.n;
        correct += p.correct;
        out.ce += p.ce;
        f += p.fkl;
        r += p.rkl;
        lh += p.lambda_head;
        lt += p.lambda_tail;
        out.spikes.merge(p.spikes);
    }
    const double dn = static_cast<double>(n);
    out.ce /= dn;
    out.accuracy = static_cast<double>(correct) / dn;
    if (teacher) {
        out.fkl = f / dn;
        out.rkl = r / dn;
        out.lambda_head_mean = lh / dn;
        out.lambda_tail_mean = lt / dn;
    }
    return out;
}

TrainResult train_teacher(const TrainConfig& cfg,
                          const std::vector<LayerSpec>& layers,
                          const Dataset& train,
                          const Dataset& eval,
                          const MetricsSink& sink) {
    cfg.validate();
    if (train.size() == 0) throw InputError("train_teacher: training set is empty");
    if (eval.size() == 0) throw InputError("train_teacher: evaluation set is empty");
    if (layers.back().fan_out != train.class_count) {
        throw ConfigError("teacher has " + std::to_string(layers.back().fan_out) + " outputs but the dataset has " +
                          std::to_string(train.class_count) + " classes");
    }
    TrainResult result;
    Model model = init_model(with_activation(layers, Activation::kReLU), cfg.seed);
    SgdMomentum opt(model);
    std::mt19937_64 shuffle_rng(cfg.seed ^ kShuffleStream);
    std::mt19937_64 augment_rng(cfg.seed ^ kAugmentStream);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = Clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const auto batches = make_batches(order, cfg.batch_size);
        const double lr = learning_rate_at(cfg, epoch);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto labels = labels_of(train, batches[b]);
            const Tensor x = batch_input(train, batches[b], cfg, augment_rng);
            const ProbDist q = softmax_with_temperature(teacher_forward(model, x), 1.0);
            const Tensor loss = cross_entropy(q, labels);
            require_finite(loss.item(), epoch, b);
            loss.backward();
            opt.step(model, lr, cfg.momentum, cfg.clip_norm);
            loss_sum += loss.item() * static_cast<double>(labels.size());
            correct += count_correct(q.Q, labels);
        }
        MetricsRow row;
        row.epoch = epoch;
        row.split = "train";
        row.loss = row.ce = loss_sum / static_cast<double>(train.size());
        row.accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
        row.seconds = seconds_since(start);
        result.metrics.push_back(row);
        if (sink) sink(row);

        const auto eval_start = Clock::now();
        const EvalResult ev = evaluate_teacher(model, eval, cfg.eval_batch_size, cfg.eval_threads);
        MetricsRow erow;
        erow.epoch = epoch;
        erow.split = "eval";
        erow.loss = erow.ce = ev.ce;
        erow.accuracy = ev.accuracy;
        erow.seconds = seconds_since(eval_start);
        result.metrics.push_back(erow);
        if (sink) sink(erow);
        result.final_accuracy = ev.accuracy;
    }
    result.checkpoint.model = std::move(model);
    result.checkpoint.metadata = {cfg.seed, cfg.epochs, cfg.config_hash, checkpoint_extra(cfg, "teacher")};
    return result;
}

TrainResult distill_student(const TrainConfig& cfg,
                            const ModelCheckpoint& teacher,
                            const Dataset& train,
                            const Dataset& eval,
                            const MetricsSink& sink,
                            const Model* initial_student) {
    cfg.validate();
    if (train.size() == 0) throw InputError("distill_student: training set is empty");
    if (eval.size() == 0) throw InputError("distill_student: evaluation set is empty");
    const Model& tmodel = teacher.model;
    if (tmodel.num_classes() != train.class_count || tmodel.num_classes() != eval.class_count) {
        throw ConfigError("teacher has " + std::to_string(tmodel.num_classes()) + " classes but the dataset has " +
                          std::to_string(train.class_count));
    }
    const KDConfig& kd = cfg.kd;
    TrainResult result;
    Model model = init_model(with_activation(tmodel.layers, Activation::kLIF), cfg.seed, cfg.student_init_gain);
    if (initial_student != nullptr) {
        bool same = initial_student->layers.size() == model.layers.size();
        for (std::size_t i = 0; same && i < model.layers.size(); ++i) {
            same = format_layer(initial_student->layers[i]) == format_layer(model.layers[i]);
        }
        if (!same) throw ConfigError("initial student does not match the teacher's layers");
        for (auto& [name, t] : model.weights) {
            const Tensor& src = initial_student->weights.at(name);
            std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
        }
    }
    SgdMomentum opt(model);
    std::mt19937_64 shuffle_rng(cfg.seed ^ kShuffleStream);
    std::mt19937_64 augment_rng(cfg.seed ^ kAugmentStream);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double distill_scale = kd.tau_squared_scaling ? kd.tau * kd.tau : 1.0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = Clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const auto batches = make_batches(order, cfg.batch_size);
        const double lr = learning_rate_at(cfg, epoch);
        double loss_sum = 0.0, ce_sum = 0.0, fkl_sum = 0.0, rkl_sum = 0.0, distill_sum = 0.0, lh_sum = 0.0,
               lt_sum = 0.0;
        std::size_t correct = 0;
        SpikeCounter spikes;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto labels = labels_of(train, batches[b]);
            const double n = static_cast<double>(labels.size());
            const Tensor x = batch_input(train, batches[b], cfg, augment_rng);
            ProbDist qt;
            {
                NoGradGuard guard;
                qt = softmax_with_temperature(teacher_forward(tmodel, x), kd.tau);
            }
            const StudentOutput so = student_forward(model, x, cfg.timesteps, cfg.lif);
            const ProbDist qs = temporal_softmax(so.logits, kd.tau).averaged;
            const ProbDist qs_ce = kd.tau == 1.0 ? qs : temporal_softmax(so.logits, 1.0).averaged;
            const Tensor ce = cross_entropy(qs_ce, labels);

            HTAKLBreakdown br = hta_mask(qt, qs, kd.delta);
            hta_weights(br);
            Tensor distill;
            switch (kd.loss_kind) {
                case LossKind::kCrossEntropyOnly: break;
                case LossKind::kKL: distill = kd_kl_loss(qt, qs); break;
                case LossKind::kFKL: distill = fkl(qt, qs); break;
                case LossKind::kRKL: distill = rkl(qt, qs); break;
                case LossKind::kHTAKL: distill = weighted_kl_loss(qt, qs, br.lambda_head, br.lambda_tail); break;
                case LossKind::kFixedRatio: distill = fixed_ratio_loss(qt, qs, kd.ratio); break;
            }
            const bool has_distill = kd.loss_kind != LossKind::kCrossEntropyOnly;
            const Tensor loss = has_distill
                                    ? combined_skd_loss(ce, distill_scale == 1.0 ? distill : distill * distill_scale,
                                                        kd.alpha)
                                    : ce;
            require_finite(loss.item(), epoch, b);
            loss.backward();
            opt.step(model, lr, cfg.momentum, cfg.clip_norm);

            {
                NoGradGuard guard;
                const ProbDist qs_d = detached(qs);
                fkl_sum += fkl(qt, qs_d).item() * n;
                rkl_sum += rkl(qt, qs_d).item() * n;
            }
            loss_sum += loss.item() * n;
            ce_sum += ce.item() * n;
            if (has_distill) distill_sum += distill.item() * n;
            lh_sum += mean_of(br.lambda_head) * n;
            lt_sum += mean_of(br.lambda_tail) * n;
            correct += count_correct(qs_ce.Q, labels);
            spikes.add(so.records);
        }
        const double dn = static_cast<double>(train.size());
        MetricsRow row;
        row.epoch = epoch;
        row.split = "train";
        row.loss = loss_sum / dn;
        row.ce = ce_sum / dn;
        row.fkl = fkl_sum / dn;
        row.rkl = rkl_sum / dn;
        if (kd.loss_kind != LossKind::kCrossEntropyOnly) row.distill = distill_sum / dn;
        row.lambda_head_mean = lh_sum / dn;
        row.lambda_tail_mean = lt_sum / dn;
        row.accuracy = static_cast<double>(correct) / dn;
        row.firing_rate = spikes.readout_input_rate();
        row.seconds = seconds_since(start);
        result.metrics.push_back(row);
        if (sink) sink(row);

        const auto eval_start = Clock::now();
        const EvalResult ev = evaluate_student(model, eval, cfg, &tmodel);
        MetricsRow erow;
        erow.epoch = epoch;
        erow.split = "eval";
        erow.loss = erow.ce = ev.ce;
        erow.fkl = ev.fkl;
        erow.rkl = ev.rkl;
        erow.lambda_head_mean = ev.lambda_head_mean;
        erow.lambda_tail_mean = ev.lambda_tail_mean;
        erow.accuracy = ev.accuracy;
        erow.firing_rate = ev.spikes.readout_input_rate();
        erow.seconds = seconds_since(eval_start);
        result.metrics.push_back(erow);
        if (sink) sink(erow);
        result.final_accuracy = ev.accuracy;
    }
    result.checkpoint.model = std::move(model);
    result.checkpoint.metadata = {cfg.seed, cfg.epochs, cfg.config_hash, checkpoint_extra(cfg, "student")};
    return result;
}

std::vector<AblationPoint> ablate_ratio(const TrainConfig& cfg,
                                        const ModelCheckpoint& teacher,
                                        const Dataset& train,
                                        const Dataset& eval,
                                        const std::vector<double>& grid,
                                        const std::function<void(double, const MetricsRow&)>& sink) {
    if (grid.empty()) throw ConfigError("ablation grid is empty");
    for (double r : grid) {
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("ablation ratio " + std::to_string(r) + " outside [0,1]");
    }
    std::vector<AblationPoint> out;
    for (double r : grid) {
        TrainConfig point = cfg;
        point.kd.loss_kind = LossKind::kFixedRatio;
        point.kd.ratio = r;
        MetricsSink forward;
        if (sink) forward = [&sink, r](const MetricsRow& row) { sink(r, row); };
        AblationPoint p;
        p.ratio = r;
        p.run = distill_student(point, teacher, train, eval, forward);
        p.accuracy = p.run.final_accuracy;
        for (auto it = p.run.metrics.rbegin(); it != p.run.metrics.rend(); ++it) {
            if (it->split == "train") {
                p.final_train_loss = it->loss;
                break;
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace htakd
