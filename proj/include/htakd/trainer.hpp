//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/analysis.hpp"
#include "htakd/data.hpp"
#include "htakd/distill.hpp"
#include "htakd/lif.hpp"
#include "htakd/models.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace htakd {

enum class LrSchedule { kConstant, kCosine };

struct TrainConfig {
    std::size_t epochs = 20;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 128;
    std::size_t timesteps = 2;
    KDConfig kd;
    LIFParams lif;
    std::uint64_t seed = 0;
    LrSchedule lr_schedule = LrSchedule::kCosine;
    double clip_norm = 0.0;  // 0 disables global-norm clipping
    double flip_prob = 0.0;
    std::size_t crop_pad = 0;
    std::size_t eval_threads = 1;
    std::size_t eval_batch_size = 256;
    // Init scale of the student's hidden layers; spikes need currents near v_th.
    double student_init_gain = 2.0;

    // Recorded in checkpoint metadata.
    std::string config_hash;
    std::map<std::string, std::string> metadata;

    void validate() const;
};

double learning_rate_at(const TrainConfig& config, std::size_t epoch);

struct MetricsRow {
    std::size_t epoch = 0;
    std::string split;  // "train" or "eval"
    double loss = 0.0;  // optimised objective (train) or CE (eval)
    double ce = 0.0;
    std::optional<double> fkl;
    std::optional<double> rkl;
    std::optional<double> distill;
    std::optional<double> lambda_head_mean;
    std::optional<double> lambda_tail_mean;
    double accuracy = 0.0;
    std::optional<double> firing_rate;
    double seconds = 0.0;
};

using MetricsSink = std::function<void(const MetricsRow&)>;

// v <- momentum·v + g;  w <- w - lr·v
void sgd_momentum_step(std::span<double> weights,
                       std::span<const double> grads,
                       std::span<double> velocity,
                       double lr,
                       double momentum);

class SgdMomentum {
public:
    explicit SgdMomentum(const Model& model);
    // Applies one step from the parameters' accumulated gradients, then clears them.
    void step(Model& model, double lr, double momentum, double clip_norm = 0.0);

private:
    std::map<std::string, std::vector<double>> velocity_;
};

struct EvalResult {
    double accuracy = 0.0;
    double ce = 0.0;
    std::optional<double> fkl;
    std::optional<double> rkl;
    std::optional<double> lambda_head_mean;
    std::optional<double> lambda_tail_mean;
    SpikeCounter spikes;
};

EvalResult evaluate_teacher(const Model& teacher, const Dataset& ds, std::size_t batch_size, std::size_t threads);

// Pass a teacher to also report divergence statistics at temperature kd.tau.
EvalResult evaluate_student(const Model& student,
                            const Dataset& ds,
                            const TrainConfig& config,
                            const Model* teacher = nullptr);

struct TrainResult {
    ModelCheckpoint checkpoint;
    std::vector<MetricsRow> metrics;
    double final_accuracy = 0.0;
};

// CE-only training of a ReLU teacher. Throws InputError on an empty dataset.
TrainResult train_teacher(const TrainConfig& config,
                          const std::vector<LayerSpec>& layers,
                          const Dataset& train,
                          const Dataset& eval,
                          const MetricsSink& sink = {});

// Trains the spiking counterpart of the teacher's architecture with the
// configured distillation objective. Throws ConfigError when the teacher's
// class count differs from the dataset's.
// initial_student, when given, replaces the seeded init; its layers must equal
// the teacher's with LIF activations.
TrainResult distill_student(const TrainConfig& config,
                            const ModelCheckpoint& teacher,
                            const Dataset& train,
                            const Dataset& eval,
                            const MetricsSink& sink = {},
                            const Model* initial_student = nullptr);

struct AblationPoint {
    double ratio = 0.0;
    double accuracy = 0.0;
    double final_train_loss = 0.0;
    TrainResult run;
};

// One fixed-ratio student per grid value. Throws ConfigError on an empty grid
// or a value outside [0,1].
std::vector<AblationPoint> ablate_ratio(const TrainConfig& config,
                                        const ModelCheckpoint& teacher,
                                        const Dataset& train,
                                        const Dataset& eval,
                                        const std::vector<double>& grid,
                                        const std::function<void(double ratio, const MetricsRow&)>& sink = {});

}  // namespace htakd
