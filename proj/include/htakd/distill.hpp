//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "htakd/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace htakd {

// Floor applied to every probability before a log.
inline constexpr double kProbabilityFloor = 1e-12;
// Below this total aligned distance the head/tail weights fall back to 0.5.
inline constexpr double kDegenerateDistance = 1e-12;

/// Logits, their temperature softmax, and the temperature used.
struct ProbDist {
    Tensor Z;  // [B×C]
    Tensor Q;  // [B×C], rows sum to 1
    double tau = 1.0;

    std::size_t batch() const { return Q.dim(0); }
    std::size_t classes() const { return Q.dim(1); }
};

struct TemporalStudentOutput {
    std::vector<ProbDist> per_timestep;
    // Q is the mean of the per-timestep probabilities; Z the mean logits.
    ProbDist averaged;
};

/// Intermediates of the head/tail split for a batch. All values are plain
/// data computed from detached probabilities.
struct HTAKLBreakdown {
    std::size_t batch = 0;
    std::size_t classes = 0;
    Tensor sorted_teacher;          // [B×C], rows non-increasing
    std::vector<std::size_t> perm;  // [B×C] row-major source class of each rank
    Tensor gathered_student;        // [B×C] student reordered by perm
    Tensor D;                       // [B×C] |sorted_teacher - gathered_student|
    Tensor cum;                     // [B×C] running teacher mass in rank order
    Tensor head_mask;               // [B×C] 1 where cum < delta
    Tensor tail_mask;               // [B×C] 1 - head_mask
    std::vector<double> d_head;
    std::vector<double> d_tail;
    std::vector<double> lambda_head;
    std::vector<double> lambda_tail;
    double delta = 0.5;
};

enum class LossKind { kCrossEntropyOnly, kKL, kFKL, kRKL, kHTAKL, kFixedRatio };

std::string to_string(LossKind kind);

struct KDConfig {
    double alpha = 0.5;
    double tau = 2.0;
    double delta = 0.5;
    LossKind loss_kind = LossKind::kHTAKL;
    double ratio = 0.5;            // head weight for kFixedRatio
    bool tau_squared_scaling = false;  // multiplies the distillation term by tau²

    // Throws ConfigError when an invariant fails.
    void validate() const;
};

ProbDist softmax_with_temperature(const Tensor& z, double tau);

// logits [T×B×C] -> per-step distributions plus the probability average.
TemporalStudentOutput temporal_softmax(const Tensor& logits, double tau);

// Mean over the batch of -log Q[b, label_b].
Tensor cross_entropy(const ProbDist& student, const std::vector<std::size_t>& labels);

// Per-sample divergences, shape [B]. The teacher is treated as constant.
Tensor fkl_per_sample(const ProbDist& teacher, const ProbDist& student);
Tensor rkl_per_sample(const ProbDist& teacher, const ProbDist& student);

// Batch means of the per-sample divergences.
Tensor fkl(const ProbDist& teacher, const ProbDist& student);
Tensor rkl(const ProbDist& teacher, const ProbDist& student);
Tensor kd_kl_loss(const ProbDist& teacher, const ProbDist& student_avg);

HTAKLBreakdown hta_mask(const ProbDist& teacher, const ProbDist& student_avg, double delta);
// Fills lambda_head / lambda_tail of the breakdown from d_head / d_tail.
void hta_weights(HTAKLBreakdown& breakdown);

// mean_b(lambda_head[b]·FKL_b + lambda_tail[b]·RKL_b) with the weights held constant.
Tensor weighted_kl_loss(const ProbDist& teacher,
                        const ProbDist& student_avg,
                        const std::vector<double>& lambda_head,
                        const std::vector<double>& lambda_tail);

struct HTAKLResult {
    Tensor loss;
    HTAKLBreakdown breakdown;
};

HTAKLResult hta_kl_loss(const ProbDist& teacher, const ProbDist& student_avg, double delta);

Tensor fixed_ratio_loss(const ProbDist& teacher, const ProbDist& student_avg, double ratio);

// (1 - alpha)·ce + alpha·distill
Tensor combined_skd_loss(const Tensor& ce, const Tensor& distill, double alpha);

}  // namespace htakd
