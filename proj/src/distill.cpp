//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/distill.hpp"

#include "htakd/errors.hpp"
#include "htakd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace htakd {

namespace {

void require_same_shape(const ProbDist& teacher, const ProbDist& student, const char* op) {
    if (teacher.Q.shape() != student.Q.shape()) {
        throw DimensionError(std::string(op) + ": teacher " + shape_to_string(teacher.Q.shape()) + " vs student " +
                             shape_to_string(student.Q.shape()));
    }
}

// log of the floored teacher probabilities, off the graph.
Tensor teacher_log(const ProbDist& teacher) {
    NoGradGuard guard;
    return log(clamp_min(teacher.Q.detach(), kProbabilityFloor));
}

Tensor student_log(const ProbDist& student) { return log(clamp_min(student.Q, kProbabilityFloor)); }

Tensor constant_vector(const std::vector<double>& values) { return Tensor::vector(values); }

}  // namespace

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::kCrossEntropyOnly: return "ce";
        case LossKind::kKL: return "kl";
        case LossKind::kFKL: return "fkl";
        case LossKind::kRKL: return "rkl";
        case LossKind::kHTAKL: return "hta";
        case LossKind::kFixedRatio: return "fixed";
    }
    return "unknown";
}

void KDConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("fixed ratio must lie in [0,1]");
}

ProbDist softmax_with_temperature(const Tensor& z, double tau) {
    if (!(tau > 0.0)) throw ContractError("softmax_with_temperature: tau must be > 0");
    if (z.rank() != 2) throw DimensionError("softmax_with_temperature: logits must be [B×C], got " +
                                            shape_to_string(z.shape()));
    return ProbDist{z, softmax_rows(z / tau), tau};
}

TemporalStudentOutput temporal_softmax(const Tensor& logits, double tau) {
    if (logits.rank() != 3 || logits.dim(0) == 0) {
        throw DimensionError("temporal_softmax: logits must be [T×B×C] with T >= 1, got " +
                             shape_to_string(logits.shape()));
    }
    const std::size_t steps = logits.dim(0);
    TemporalStudentOutput out;
    out.per_timestep.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) out.per_timestep.push_back(softmax_with_temperature(select(logits, t), tau));
    if (steps == 1) {
        out.averaged = out.per_timestep.front();
        return out;
    }
    Tensor q_sum = out.per_timestep[0].Q;
    Tensor z_sum = out.per_timestep[0].Z;
    for (std::size_t t = 1; t < steps; ++t) {
        q_sum = q_sum + out.per_timestep[t].Q;
        z_sum = z_sum + out.per_timestep[t].Z;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    out.averaged = ProbDist{z_sum * inv, q_sum * inv, tau};
    return out;
}

Tensor cross_entropy(const ProbDist& student, const std::vector<std::size_t>& labels) {
    const std::size_t classes = student.classes();
    for (std::size_t y : labels) {
        if (y >= classes) {
            throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(classes) +
                                ")");
        }
    }
    return mean(-log(clamp_min(pick(student.Q, labels), kProbabilityFloor)));
}

Tensor fkl_per_sample(const ProbDist& teacher, const ProbDist& student) {
    require_same_shape(teacher, student, "fkl");
    const Tensor qt = teacher.Q.detach();
    return sum(qt * (teacher_log(teacher) - student_log(student)), 1);
}

Tensor rkl_per_sample(const ProbDist& teacher, const ProbDist& student) {
    require_same_shape(teacher, student, "rkl");
    return sum(student.Q * (student_log(student) - teacher_log(teacher)), 1);
}

Tensor fkl(const ProbDist& teacher, const ProbDist& student) { return mean(fkl_per_sample(teacher, student)); }

Tensor rkl(const ProbDist& teacher, const ProbDist& student) { return mean(rkl_per_sample(teacher, student)); }

Tensor kd_kl_loss(const ProbDist& teacher, const ProbDist& student_avg) { return fkl(teacher, student_avg); }

HTAKLBreakdown hta_mask(const ProbDist& teacher, const ProbDist& student_avg, double delta) {
    require_same_shape(teacher, student_avg, "hta_mask");
    if (!(delta > 0.0 && delta < 1.0)) throw ContractError("hta_mask: delta must lie in (0,1)");
    const std::size_t rows = teacher.batch(), cols = teacher.classes();
    auto qt = teacher.Q.data();
    auto qs = student_avg.Q.data();

    HTAKLBreakdown br;
    br.batch = rows;
    br.classes = cols;
    br.delta = delta;
    br.perm.resize(rows * cols);
    std::vector<double> sorted(rows * cols), gathered(rows * cols), dist(rows * cols), cum(rows * cols),
        head(rows * cols), tail(rows * cols);
    br.d_head.assign(rows, 0.0);
    br.d_tail.assign(rows, 0.0);

    std::vector<std::size_t> order(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * cols;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return qt[base + a] > qt[base + b]; });
        double running = 0.0;
        for (std::size_t i = 0; i < cols; ++i) {
            const std::size_t k = base + i;
            br.perm[k] = order[i];
            sorted[k] = qt[base + order[i]];
            gathered[k] = qs[base + order[i]];
            dist[k] = std::abs(sorted[k] - gathered[k]);
            running += sorted[k];
            cum[k] = running;
            head[k] = running < delta ? 1.0 : 0.0;
            tail[k] = 1.0 - head[k];
            br.d_head[r] += dist[k] * head[k];
            br.d_tail[r] += dist[k] * tail[k];
        }
    }
    const Shape shape{rows, cols};
    br.sorted_teacher = Tensor(shape, std::move(sorted));
    br.gathered_student = Tensor(shape, std::move(gathered));
    br.D = Tensor(shape, std::move(dist));
    br.cum = Tensor(shape, std::move(cum));
    br.head_mask = Tensor(shape, std::move(head));
    br.tail_mask = Tensor(shape, std::move(tail));
    return br;
}

void hta_weights(HTAKLBreakdown& br) {
    br.lambda_head.assign(br.batch, 0.5);
    br.lambda_tail.assign(br.batch, 0.5);
    for (std::size_t r = 0; r < br.batch; ++r) {
        const double total = br.d_head[r] + br.d_tail[r];
        if (total < kDegenerateDistance) continue;
        br.lambda_head[r] = br.d_head[r] / total;
        // 1 - lambda_head rather than d_tail / total keeps the pair on the simplex exactly.
        br.lambda_tail[r] = 1.0 - br.lambda_head[r];
    }
}

Tensor weighted_kl_loss(const ProbDist& teacher,
                        const ProbDist& student_avg,
                        const std::vector<double>& lambda_head,
                        const std::vector<double>& lambda_tail) {
    const std::size_t rows = teacher.batch();
    if (lambda_head.size() != rows || lambda_tail.size() != rows) {
        throw DimensionError("weighted_kl_loss: need one head/tail weight per sample");
    }
    const Tensor per_sample = constant_vector(lambda_head) * fkl_per_sample(teacher, student_avg) +
                              constant_vector(lambda_tail) * rkl_per_sample(teacher, student_avg);
    return mean(per_sample);
}

HTAKLResult hta_kl_loss(const ProbDist& teacher, const ProbDist& student_avg, double delta) {
    HTAKLResult out{Tensor{}, hta_mask(teacher, student_avg, delta)};
    hta_weights(out.breakdown);
    out.loss = weighted_kl_loss(teacher, student_avg, out.breakdown.lambda_head, out.breakdown.lambda_tail);
    return out;
}

Tensor fixed_ratio_loss(const ProbDist& teacher, const ProbDist& student_avg, double ratio) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ContractError("fixed_ratio_loss: ratio must lie in [0,1]");
    const std::size_t rows = teacher.batch();
    return weighted_kl_loss(teacher, student_avg, std::vector<double>(rows, ratio),
                            std::vector<double>(rows, 1.0 - ratio));
}

Tensor combined_skd_loss(const Tensor& ce, const Tensor& distill, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("combined_skd_loss: alpha must lie in [0,1]");
    return ce * (1.0 - alpha) + distill * alpha;
}

}  // namespace htakd
