// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lossync/drift.hpp"
#include "lossync/harness.hpp"

using namespace lossync;

TEST(DriftRecurrence, Examples) {
    EXPECT_DOUBLE_EQ(drift_recurrence_step(0.0, 0.5, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(drift_recurrence_step(3.7, 0.0, 9.0), 0.0);
    EXPECT_DOUBLE_EQ(drift_recurrence_step(1.0, 0.5, 1.0), 0.75);
    EXPECT_THROW(drift_recurrence_step(-1.0, 0.5, 1.0), Error);
    EXPECT_THROW(drift_recurrence_step(1.0, 0.5, -1.0), Error);
    EXPECT_THROW(drift_recurrence_step(1.0, 1.0, 1.0), Error);
}

TEST(DriftClosedForm, Examples) {
    EXPECT_DOUBLE_EQ(drift_closed_form(1, 0.0, 0.5, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(drift_closed_form(0, 2.5, 0.3, 1.0), 2.5);
    EXPECT_NEAR(drift_closed_form(200, 7.0, 0.3, 2.0), 2.0 * 0.3 / 1.3 * 2.0, 1e-12);
    EXPECT_NEAR(drift_closed_form(200, 7.0, 0.3, 2.0), 0.9231, 1e-4);
    EXPECT_THROW(drift_closed_form(3, 0.0, 1.0, 1.0), Error);
}

TEST(DriftSteadyState, Examples) {
    EXPECT_NEAR(drift_steady_state(0.1, 1.0), 0.181818181818, 1e-12);
    EXPECT_EQ(drift_steady_state(0.0, 5.0), 0.0);
    EXPECT_NEAR(drift_steady_state(0.5, 2.0), 4.0 / 3.0, 1e-15);
    EXPECT_THROW(drift_steady_state(1.0, 1.0), Error);
}

TEST(DriftRecurrence, UnrolledFormMatchesIteration) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> e0d(0.0, 10.0), s2d(0.01, 5.0);
    for (double p = 0.1; p < 0.95; p += 0.1) {
        const double e0 = e0d(rng), s2 = s2d(rng);
        double e = e0;
        for (std::uint64_t t = 1; t <= 10000; ++t) {
            e = drift_recurrence_step(e, p, s2);
            const double c = drift_closed_form(t, e0, p, s2);
            ASSERT_LE(std::abs(e - c), 1e-10 * std::max(std::abs(c), 1e-300)) << "p=" << p << " t=" << t;
        }
    }
}

TEST(DriftRecurrence, DeviationContractsByPSquared) {
    const double p = 0.6, s2 = 1.5, e_inf = drift_steady_state(p, s2);
    double e = 10.0;
    for (int t = 0; t < 40; ++t) {
        const double next = drift_recurrence_step(e, p, s2);
        EXPECT_NEAR(next - e_inf, p * p * (e - e_inf), 1e-12);
        EXPECT_LE(std::abs(next - e_inf), std::abs(e - e_inf));
        e = next;
    }
}

TEST(DriftTrajectories, RecurrenceAndClosedFormAgree) {
    const auto a = recurrence_trajectory(300, 1.0, 0.4, 2.0);
    const auto b = closed_form_trajectory(300, 1.0, 0.4, 2.0);
    ASSERT_EQ(a.values.size(), 301u);
    ASSERT_EQ(b.values.size(), 301u);
    for (std::size_t t = 0; t <= 300; ++t) EXPECT_NEAR(a.values[t], b.values[t], 1e-12);
    EXPECT_EQ(a.source, DriftSource::Recurrence);
    EXPECT_EQ(b.source, DriftSource::ClosedForm);
}

TEST(DriftCaseTable, FourOutcomes) {
    EXPECT_EQ(drift_case_table(3.0, true, true, 0.5), 0.0);
    EXPECT_EQ(drift_case_table(3.0, true, false, 0.5), 0.5);
    EXPECT_EQ(drift_case_table(3.0, false, true, 0.5), -0.5);
    EXPECT_EQ(drift_case_table(3.0, false, false, 0.5), 3.0);
}

TEST(MonteCarlo, LosslessIsExactlyZero) {
    const auto mc = mc_drift_process(0.0, UpdateSampler{}, 100, 2000, 1);
    for (double v : mc.values) EXPECT_EQ(v, 0.0);
}

TEST(MonteCarlo, SteadyStateWithinFivePercent) {
    const auto mc = mc_drift_process(0.3, UpdateSampler{}, 200, 100000, 7);
    const double predicted = drift_steady_state(0.3, 1.0);
    EXPECT_NEAR(predicted, 0.4615, 1e-4);
    EXPECT_LT(std::abs(mc.tail_mean(100) - predicted) / predicted, 0.05);
}

TEST(MonteCarlo, TracksRecurrenceTransient) {
    // E_0 = 0, so E_1 = 2p(1-p) sigma^2 exactly in expectation.
    const double p = 0.4, s2 = 2.0;
    const auto mc = mc_drift_process(p, UpdateSampler{UpdateSampler::Distribution::Rademacher, s2}, 20, 200000, 3);
    const auto rec = recurrence_trajectory(20, 0.0, p, s2);
    for (std::size_t t = 1; t <= 20; ++t) EXPECT_NEAR(mc.values[t], rec.values[t], 0.03 * rec.values[t]);
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResult) {
    const auto a = mc_drift_process(0.2, UpdateSampler{}, 50, 5000, 11, 1);
    const auto b = mc_drift_process(0.2, UpdateSampler{}, 50, 5000, 11, 3);
    EXPECT_EQ(a.values, b.values);
}

TEST(EstimateSigma2, Examples) {
    const std::vector<std::vector<double>> constant(20, std::vector<double>(4, 0.3));
    EXPECT_NEAR(estimate_sigma2(constant, 10), 0.09, 1e-15);
    const std::vector<std::vector<double>> zeros(5, std::vector<double>(4, 0.0));
    EXPECT_EQ(estimate_sigma2(zeros, 10), 0.0);
    EXPECT_THROW(estimate_sigma2(std::vector<std::vector<double>>{}, 10), Error);
    EXPECT_THROW(estimate_sigma2(constant, 0), Error);
}

TEST(EstimateSigma2, GaussianUpdates) {
    std::mt19937_64 rng(5);
    const double s2 = 2.5;
    std::normal_distribution<double> normal(0.0, std::sqrt(s2));
    std::vector<std::vector<double>> history(10000, std::vector<double>(1));
    for (auto& u : history) u[0] = normal(rng);
    EXPECT_NEAR(estimate_sigma2(history, 10000), s2, 0.03 * s2);
}

TEST(EstimateSigma2, UsesOnlyTheWindow) {
    std::vector<std::vector<double>> history(10, std::vector<double>{100.0});
    for (int r = 0; r < 3; ++r) history.push_back({1.0});
    EXPECT_EQ(estimate_sigma2(history, 3), 1.0);
}

TEST(PairwiseDrift, Examples) {
    const auto layout = shard_partition(4, 4);
    std::vector<ParamVector> same(3, ParamVector{1, 2, 3, 4});
    for (double v : pairwise_drift(same, layout, 2)) EXPECT_EQ(v, 0.0);

    const auto two = shard_partition(6, 2);
    std::vector<ParamVector> shifted = {{0, 0, 0, 1, 1, 1}, {0, 0, 0, 3.5, 3.5, 3.5}};
    EXPECT_EQ(pairwise_drift(shifted, two, 1), (std::vector<double>{6.25}));

    const auto one = shard_partition(1, 1);
    std::vector<ParamVector> scalars = {{0}, {1}, {2}, {3}};
    EXPECT_EQ(pairwise_drift(scalars, one, 0), (std::vector<double>{1, 4, 9, 1, 4, 1}));
    EXPECT_THROW(pairwise_drift(std::vector<ParamVector>{{0}}, one, 0), Error);
}

TEST(DriftPairs, AllPairsUpToEightWorkers) {
    EXPECT_EQ(drift_pairs(8, 1).size(), 28u);
    EXPECT_EQ(drift_pairs(3, 1), (std::vector<WorkerPair>{{0, 1}, {0, 2}, {1, 2}}));
    const auto sampled = drift_pairs(16, 4);
    EXPECT_EQ(sampled.size(), 32u);
    EXPECT_EQ(sampled, drift_pairs(16, 4));
    EXPECT_TRUE(std::is_sorted(sampled.begin(), sampled.end()));
    for (const auto& [i, k] : sampled) EXPECT_LT(i, k);
}

TEST(TrajectoryCsv, Format) {
    std::ostringstream out;
    const DriftTrajectory t[] = {recurrence_trajectory(1, 0.0, 0.5, 1.0)};
    write_trajectories_csv(out, t);
    EXPECT_EQ(out.str(), "source,t,E_t\nrecurrence,0,0\nrecurrence,1,0.5\n");
}

TEST(LiveDrift, WithinLooseBandOfPrediction) {
    ExperimentConfig cfg;
    cfg.workers = 8;
    cfg.model = Model{ModelKind::LeastSquares, 16, 0};
    cfg.iterations = 2000;
    cfg.learning_rate = LearningRate{0.05, 0.0};
    cfg.p_grad = cfg.p_param = 0.2;
    const auto m = simulate(cfg);
    ASSERT_TRUE(m.summary.predicted_drift.has_value());
    const double ratio = m.summary.steady_drift / *m.summary.predicted_drift;
    EXPECT_GE(ratio, 0.5);
    EXPECT_LE(ratio, 2.0);
}
