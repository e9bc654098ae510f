//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/distill.hpp"
#include "htakd/errors.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace htakd;
using namespace htakd::testing;

namespace {

// 30-digit reference values for teacher (0.7,0.2,0.1) against student (0.5,0.3,0.2).
constexpr double kRefFkl = 0.0851228259572216440;
constexpr double kRefRkl = 0.0920328502338319112;
constexpr double kRefHalf = 0.0885778380955267776;
// teacher (0.7,0.3) against averaged student (0.6,0.4)
constexpr double kRefKd = 0.0216008541435465348;

ProbDist dist_of(const std::vector<std::vector<double>>& rows) {
    const std::size_t c = rows.front().size();
    std::vector<double> q, z;
    for (const auto& r : rows) {
        for (double v : r) {
            q.push_back(v);
            z.push_back(std::log(v));
        }
    }
    return ProbDist{Tensor(Shape{rows.size(), c}, z), Tensor(Shape{rows.size(), c}, q), 1.0};
}

ProbDist random_dist(std::mt19937_64& rng, std::size_t b, std::size_t c) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < b; ++i) rows.push_back(random_distribution(rng, c));
    return dist_of(rows);
}

// Long-double per-row sums, independent of the tensor code path.
long double oracle_kl(const std::vector<double>& p, const std::vector<double>& q) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * std::log(static_cast<long double>(p[i]) / q[i]);
    return acc;
}

std::vector<double> row(const Tensor& t, std::size_t r) {
    const std::size_t c = t.dim(1);
    return {t.data().begin() + static_cast<std::ptrdiff_t>(r * c), t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

}  // namespace

TEST_CASE("softmax with temperature") {
    ProbDist u = softmax_with_temperature(Tensor::matrix(1, 3, {0, 0, 0}), 1.0);
    for (double v : u.Q.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    ProbDist a = softmax_with_temperature(Tensor::matrix(1, 2, {2, 0}), 2.0);
    CHECK(a.Q[0] == doctest::Approx(0.731058578630004879).epsilon(1e-14));
    CHECK(a.Q[1] == doctest::Approx(0.268941421369995121).epsilon(1e-14));
    CHECK(a.tau == 2.0);

    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor z = random_tensor(rng, {3, 5}, -5, 5);
        const double shift = std::uniform_real_distribution<double>(-100, 100)(rng);
        ProbDist p = softmax_with_temperature(z, 1.5);
        ProbDist q = softmax_with_temperature(z + shift, 1.5);
        for (std::size_t i = 0; i < 15; ++i) CHECK(std::abs(p.Q[i] - q.Q[i]) <= 1e-12);
    }
    CHECK_THROWS_AS(softmax_with_temperature(Tensor::matrix(1, 2, {1, 2}), 0.0), ContractError);
    CHECK_THROWS_AS(softmax_with_temperature(Tensor::matrix(1, 2, {1, 2}), -1.0), ContractError);
}

TEST_CASE("probabilities stay normalised and inside (0,1)") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        ProbDist p = softmax_with_temperature(random_tensor(rng, {2, 10}, -30, 30), 2.0);
        for (std::size_t r = 0; r < 2; ++r) {
            double s = 0.0;
            for (double v : row(p.Q, r)) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("cross-entropy") {
    ProbDist q = dist_of({{0.25, 0.5, 0.25}});
    CHECK(cross_entropy(q, {1}).item() == doctest::Approx(0.693147180559945309).epsilon(1e-14));
    for (std::size_t c : {2u, 10u, 100u}) {
        ProbDist uni = dist_of({std::vector<double>(c, 1.0 / static_cast<double>(c))});
        CHECK(cross_entropy(uni, {c - 1}).item() == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-13));
    }
    ProbDist sharp = dist_of({{1.0 - 1e-15, 1e-15}});
    CHECK(cross_entropy(sharp, {0}).item() < 1e-14);
    CHECK_THROWS_AS(cross_entropy(q, {3}), ContractError);
}

TEST_CASE("divergence reference values") {
    ProbDist t = dist_of({{0.7, 0.2, 0.1}});
    ProbDist s = dist_of({{0.5, 0.3, 0.2}});
    const double f = fkl(t, s).item(), r = rkl(t, s).item();
    CHECK(f == doctest::Approx(kRefFkl).epsilon(1e-13));
    CHECK(r == doctest::Approx(kRefRkl).epsilon(1e-13));
    CHECK(std::abs(f - r) > 1e-3);
    CHECK(f == doctest::Approx(static_cast<double>(oracle_kl({0.7, 0.2, 0.1}, {0.5, 0.3, 0.2}))).epsilon(1e-14));
    CHECK(r == doctest::Approx(static_cast<double>(oracle_kl({0.5, 0.3, 0.2}, {0.7, 0.2, 0.1}))).epsilon(1e-14));

    ProbDist t2 = dist_of({{0.7, 0.3}});
    ProbDist s2 = dist_of({{0.6, 0.4}});
    CHECK(kd_kl_loss(t2, s2).item() == doctest::Approx(kRefKd).epsilon(1e-13));
    CHECK(fixed_ratio_loss(t, s, 0.5).item() == doctest::Approx(kRefHalf).epsilon(1e-13));
}

TEST_CASE("divergences against the long-double oracle on random batches") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        ProbDist t = random_dist(rng, 4, 7);
        ProbDist s = random_dist(rng, 4, 7);
        long double f = 0, r = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            f += oracle_kl(row(t.Q, b), row(s.Q, b));
            r += oracle_kl(row(s.Q, b), row(t.Q, b));
        }
        CHECK(fkl(t, s).item() == doctest::Approx(static_cast<double>(f / 4)).epsilon(1e-11));
        CHECK(rkl(t, s).item() == doctest::Approx(static_cast<double>(r / 4)).epsilon(1e-11));
    }
}

TEST_CASE("divergences are non-negative") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 500; ++trial) {
        ProbDist t = random_dist(rng, 3, 10);
        ProbDist s = random_dist(rng, 3, 10);
        CHECK(fkl(t, s).item() >= -1e-9);
        CHECK(rkl(t, s).item() >= -1e-9);
        CHECK(kd_kl_loss(t, s).item() >= -1e-9);
        CHECK(hta_kl_loss(t, s, 0.5).loss.item() >= -1e-9);
    }
}

TEST_CASE("divergences are permutation invariant") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto pt = random_distribution(rng, 8), ps = random_distribution(rng, 8);
        std::vector<std::size_t> perm(8);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> qt(8), qs(8);
        for (std::size_t i = 0; i < 8; ++i) {
            qt[i] = pt[perm[i]];
            qs[i] = ps[perm[i]];
        }
        CHECK(std::abs(fkl(dist_of({pt}), dist_of({ps})).item() - fkl(dist_of({qt}), dist_of({qs})).item()) <= 1e-12);
        CHECK(std::abs(rkl(dist_of({pt}), dist_of({ps})).item() - rkl(dist_of({qt}), dist_of({qs})).item()) <= 1e-12);
    }
}

TEST_CASE("temporal averaging") {
    Tensor logits(Shape{2, 1, 2}, std::vector<double>{30, -30, -30, 30});
    TemporalStudentOutput out = temporal_softmax(logits, 1.0);
    CHECK(out.per_timestep.size() == 2);
    CHECK(out.averaged.Q[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.averaged.Q[1] == doctest::Approx(0.5).epsilon(1e-12));
    ProbDist t = dist_of({{0.7, 0.3}});
    CHECK(kd_kl_loss(t, out.averaged).item() ==
          doctest::Approx(fkl(t, dist_of({{0.5, 0.5}})).item()).epsilon(1e-12));

    std::mt19937_64 rng(6);
    Tensor one = random_tensor(rng, {1, 3, 4});
    TemporalStudentOutput single = temporal_softmax(one, 2.0);
    ProbDist direct = softmax_with_temperature(select(one, 0), 2.0);
    CHECK(bitwise_equal(single.averaged.Q.data(), direct.Q.data()));
    ProbDist teacher = random_dist(rng, 3, 4);
    CHECK(kd_kl_loss(teacher, single.averaged).item() == fkl(teacher, direct).item());

    Tensor many = random_tensor(rng, {5, 3, 4}, -3, 3);
    TemporalStudentOutput avg = temporal_softmax(many, 1.0);
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (double v : row(avg.averaged.Q, r)) s += v;
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    CHECK_THROWS_AS(temporal_softmax(Tensor(Shape{0, 2, 2}), 1.0), DimensionError);
    CHECK_THROWS_AS(temporal_softmax(Tensor(Shape{2, 2}), 1.0), DimensionError);
}

TEST_CASE("teacher receives no gradient") {
    std::mt19937_64 rng(7);
    Tensor zt = random_leaf(rng, {2, 5});
    Tensor zs = random_leaf(rng, {2, 5});
    ProbDist t = softmax_with_temperature(zt, 2.0);
    ProbDist s = softmax_with_temperature(zs, 2.0);
    (fkl(t, s) + rkl(t, s) + hta_kl_loss(t, s, 0.5).loss).backward();
    CHECK(!zt.has_grad());
    CHECK(zs.has_grad());
}

TEST_CASE("hta mask hand example") {
    ProbDist t = dist_of({{0.4, 0.3, 0.2, 0.1}});
    ProbDist s = dist_of({{0.25, 0.25, 0.25, 0.25}});
    HTAKLBreakdown br = hta_mask(t, s, 0.5);
    const std::vector<double> cum = {0.4, 0.7, 0.9, 1.0}, head = {1, 0, 0, 0}, d = {0.15, 0.05, 0.05, 0.15};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(br.cum[i] == doctest::Approx(cum[i]).epsilon(1e-15));
        CHECK(br.head_mask[i] == head[i]);
        CHECK(br.tail_mask[i] == 1.0 - head[i]);
        CHECK(br.D[i] == doctest::Approx(d[i]).epsilon(1e-14));
        CHECK(br.perm[i] == i);
    }
    CHECK(br.d_head[0] == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(br.d_tail[0] == doctest::Approx(0.25).epsilon(1e-14));
    hta_weights(br);
    CHECK(br.lambda_head[0] == doctest::Approx(0.375).epsilon(1e-13));
    CHECK(br.lambda_tail[0] == doctest::Approx(0.625).epsilon(1e-13));
}

TEST_CASE("hta mask sorts and gathers") {
    ProbDist t = dist_of({{0.1, 0.4, 0.2, 0.3}});
    ProbDist s = dist_of({{0.4, 0.3, 0.2, 0.1}});
    HTAKLBreakdown br = hta_mask(t, s, 0.5);
    const std::vector<std::size_t> perm = {1, 3, 2, 0};
    const std::vector<double> sorted = {0.4, 0.3, 0.2, 0.1}, gathered = {0.3, 0.1, 0.2, 0.4};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(br.perm[i] == perm[i]);
        CHECK(br.sorted_teacher[i] == sorted[i]);
        CHECK(br.gathered_student[i] == gathered[i]);
    }
    // Ties keep index order.
    HTAKLBreakdown tie = hta_mask(dist_of({{0.25, 0.25, 0.25, 0.25}}), s, 0.5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(tie.perm[i] == i);
}

TEST_CASE("uniform teacher head is ranks with i/C below delta") {
    for (std::size_t c : {4u, 8u}) {
        ProbDist t = dist_of({std::vector<double>(c, 1.0 / static_cast<double>(c))});
        HTAKLBreakdown br = hta_mask(t, t, 0.5);
        for (std::size_t i = 0; i < c; ++i) {
            const double expected_cum = static_cast<double>(i + 1) / static_cast<double>(c);
            CHECK(br.cum[i] == expected_cum);
            CHECK(br.head_mask[i] == (expected_cum < 0.5 ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("degenerate alignment falls back to equal weights") {
    ProbDist t = dist_of({{0.6, 0.3, 0.1}});
    HTAKLResult r = hta_kl_loss(t, t, 0.5);
    CHECK(r.breakdown.lambda_head[0] == 0.5);
    CHECK(r.breakdown.lambda_tail[0] == 0.5);
    CHECK(std::abs(r.loss.item()) <= 1e-9);
}

TEST_CASE("zero tail distance reduces to fkl") {
    ProbDist t = dist_of({{0.2, 0.2, 0.2, 0.2, 0.2}, {0.2, 0.2, 0.2, 0.2, 0.2}});
    ProbDist s = dist_of({{0.25, 0.15, 0.2, 0.2, 0.2}, {0.1, 0.3, 0.2, 0.2, 0.2}});
    HTAKLResult r = hta_kl_loss(t, s, 0.5);
    for (std::size_t b = 0; b < 2; ++b) {
        CHECK(r.breakdown.d_tail[b] == 0.0);
        CHECK(r.breakdown.lambda_head[b] == 1.0);
        CHECK(r.breakdown.lambda_tail[b] == 0.0);
    }
    const double a = r.loss.item(), f = fkl(t, s).item();
    CHECK(std::memcmp(&a, &f, sizeof a) == 0);
}

TEST_CASE("confident teacher has an empty head and gives rkl") {
    ProbDist t = dist_of({{0.7, 0.2, 0.1}});
    ProbDist s = dist_of({{0.5, 0.3, 0.2}});
    HTAKLResult r = hta_kl_loss(t, s, 0.5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.breakdown.head_mask[i] == 0.0);
    CHECK(r.breakdown.lambda_head[0] == 0.0);
    CHECK(r.breakdown.lambda_tail[0] == 1.0);
    CHECK(r.loss.item() == doctest::Approx(kRefRkl).epsilon(1e-13));
    const double a = r.loss.item(), b = rkl(t, s).item();
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("forced weights and ratio endpoints reduce bitwise") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        ProbDist t = random_dist(rng, 6, 10);
        ProbDist s = random_dist(rng, 6, 10);
        const std::vector<double> one(6, 1.0), zero(6, 0.0);
        const double f = fkl(t, s).item(), r = rkl(t, s).item();
        const double wf = weighted_kl_loss(t, s, one, zero).item(), wr = weighted_kl_loss(t, s, zero, one).item();
        const double x1 = fixed_ratio_loss(t, s, 1.0).item(), x0 = fixed_ratio_loss(t, s, 0.0).item();
        CHECK(std::memcmp(&wf, &f, sizeof f) == 0);
        CHECK(std::memcmp(&wr, &r, sizeof r) == 0);
        CHECK(std::memcmp(&x1, &f, sizeof f) == 0);
        CHECK(std::memcmp(&x0, &r, sizeof r) == 0);
    }
    ProbDist t = dist_of({{0.5, 0.5}});
    CHECK_THROWS_AS(fixed_ratio_loss(t, t, 1.5), ContractError);
    CHECK_THROWS_AS(weighted_kl_loss(t, t, {1.0, 0.0}, {0.0}), DimensionError);
}

TEST_CASE("mask and weight invariants on random pairs") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> delta(0.01, 0.99);
    std::size_t violations = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t c = 2 + trial % 30;
        ProbDist t = random_dist(rng, 2, c), s = random_dist(rng, 2, c);
        HTAKLBreakdown br = hta_mask(t, s, delta(rng));
        hta_weights(br);
        for (std::size_t i = 0; i < br.head_mask.numel(); ++i) {
            if (br.head_mask[i] + br.tail_mask[i] != 1.0) ++violations;
            if (i % c != 0 && br.sorted_teacher[i] > br.sorted_teacher[i - 1]) ++violations;
        }
        for (std::size_t b = 0; b < 2; ++b) {
            const double lh = br.lambda_head[b], lt = br.lambda_tail[b];
            if (std::abs(lh + lt - 1.0) > 1e-12 || lh < 0.0 || lh > 1.0 || lt < 0.0 || lt > 1.0) ++violations;
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("identity gives zero for every divergence") {
    std::mt19937_64 rng(10);
    for (std::size_t c : {2u, 10u, 100u}) {
        for (int trial = 0; trial < 50; ++trial) {
            ProbDist p = random_dist(rng, 2, c);
            CHECK(std::abs(fkl(p, p).item()) < 1e-9);
            CHECK(std::abs(rkl(p, p).item()) < 1e-9);
            CHECK(std::abs(kd_kl_loss(p, p).item()) < 1e-9);
            CHECK(std::abs(hta_kl_loss(p, p, 0.5).loss.item()) < 1e-9);
        }
    }
}

TEST_CASE("combined loss mixing") {
    Tensor ce = Tensor::scalar(1.0), d = Tensor::scalar(0.5);
    CHECK(combined_skd_loss(ce, d, 0.5).item() == 0.75);
    CHECK(combined_skd_loss(ce, d, 0.0).item() == 1.0);
    CHECK(combined_skd_loss(ce, d, 1.0).item() == 0.5);
    CHECK_THROWS_AS(combined_skd_loss(ce, d, 1.5), ContractError);
}

TEST_CASE("loss gradients w.r.t. student logits") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor zs = random_leaf(rng, {8, 10}, -3, 3);
        ProbDist t = softmax_with_temperature(random_tensor(rng, {8, 10}, -3, 3), 2.0);
        std::vector<std::size_t> y(8);
        for (auto& v : y) v = rng() % 10;
        auto student = [&] { return softmax_with_temperature(zs, 2.0); };
        HTAKLBreakdown br = hta_mask(t, student(), 0.5);
        hta_weights(br);
        CAPTURE(trial);
        CHECK(check_gradients({zs}, [&] { return cross_entropy(student(), y); }).max_rel_err < kGradTolerance);
        CHECK(check_gradients({zs}, [&] { return fkl(t, student()); }).max_rel_err < kGradTolerance);
        CHECK(check_gradients({zs}, [&] { return rkl(t, student()); }).max_rel_err < kGradTolerance);
        CHECK(check_gradients({zs}, [&] {
                  return weighted_kl_loss(t, student(), br.lambda_head, br.lambda_tail);
              }).max_rel_err < kGradTolerance);
    }
}

TEST_CASE("config validation") {
    KDConfig k;
    CHECK_NOTHROW(k.validate());
    k.delta = 1.0;
    CHECK_THROWS_AS(k.validate(), ConfigError);
    k = KDConfig{};
    k.alpha = -0.1;
    CHECK_THROWS_AS(k.validate(), ConfigError);
    k = KDConfig{};
    k.tau = 0.0;
    CHECK_THROWS_AS(k.validate(), ConfigError);
    CHECK(to_string(LossKind::kHTAKL) == "hta");
    CHECK(to_string(LossKind::kCrossEntropyOnly) == "ce");
}
