// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lossync/netsim.hpp"

using namespace lossync;

TEST(DropDecision, ZeroRateAlwaysDelivers) {
    DropConfig cfg{0.0, 0.0, 42};
    for (std::uint64_t t = 0; t < 200; ++t)
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t d = 0; d < 4; ++d) {
                ASSERT_TRUE(drop_decision(cfg, Phase::Gradient, t, s, d, d));
                ASSERT_TRUE(drop_decision(cfg, Phase::Parameter, t, d, s, d));
            }
}

TEST(DropDecision, FullRateDropsEverythingButSelf) {
    DropConfig cfg{1.0, 1.0, 42};
    for (std::uint64_t t = 0; t < 200; ++t)
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t d = 0; d < 4; ++d) {
                ASSERT_EQ(drop_decision(cfg, Phase::Gradient, t, s, d, d), s == d);
            }
    cfg.always_deliver_self = false;
    EXPECT_FALSE(drop_decision(cfg, Phase::Gradient, 0, 1, 1, 1));
}

TEST(DropDecision, FrequencyMatchesRate) {
    DropConfig cfg{0.3, 0.3, 2024};
    std::size_t delivered = 0, total = 0;
    for (std::uint64_t t = 0; t < 62500; ++t)
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t d = 0; d < 4; ++d) {
                if (s == d) continue;
                if (drop_decision(cfg, Phase::Gradient, t, s, d, d)) ++delivered;
                ++total;
            }
    // 62500 * 12 = 750000 cross pairs; add parameter-phase draws to pass 1e6.
    for (std::uint64_t t = 0; t < 25000; ++t)
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t d = 0; d < 4; ++d) {
                if (s == d) continue;
                if (drop_decision(cfg, Phase::Parameter, t, s, d, s)) ++delivered;
                ++total;
            }
    ASSERT_EQ(total, 1'050'000u);
    const double freq = static_cast<double>(delivered) / static_cast<double>(total);
    EXPECT_GE(freq, 0.6985);
    EXPECT_LE(freq, 0.7015);
}

TEST(DropDecision, NeighbouringTuplesUncorrelated) {
    DropConfig cfg{0.4, 0.4, 9};
    const std::size_t n = 1'000'000;
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = drop_decision(cfg, Phase::Gradient, k, 0, 1, 1) ? 1.0 : 0.0;
        const double y = drop_decision(cfg, Phase::Gradient, k, 0, 2, 2) ? 1.0 : 0.0;
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    const double dn = static_cast<double>(n);
    const double cov = sxy / dn - (sx / dn) * (sy / dn);
    const double vx = sxx / dn - (sx / dn) * (sx / dn);
    const double vy = syy / dn - (sy / dn) * (sy / dn);
    EXPECT_LT(std::abs(cov / std::sqrt(vx * vy)), 0.01);
}

TEST(DropDecision, OrderIndependent) {
    DropConfig cfg{0.5, 0.5, 77};
    std::vector<bool> forward, backward;
    for (std::uint64_t t = 0; t < 1000; ++t) forward.push_back(drop_decision(cfg, Phase::Parameter, t, 3, 1, 3));
    for (std::uint64_t t = 1000; t-- > 0;) backward.push_back(drop_decision(cfg, Phase::Parameter, t, 3, 1, 3));
    std::reverse(backward.begin(), backward.end());
    EXPECT_EQ(forward, backward);
}

TEST(DropDecision, LowerRateDropsAreSubset) {
    DropConfig lo{0.1, 0.1, 5}, hi{0.3, 0.3, 5};
    for (std::uint64_t t = 0; t < 20000; ++t) {
        if (!drop_decision(lo, Phase::Gradient, t, 0, 1, 1)) {
            ASSERT_FALSE(drop_decision(hi, Phase::Gradient, t, 0, 1, 1));
        }
    }
}

TEST(DropConfig, RejectsRatesOutsideUnitInterval) {
    EXPECT_THROW((DropConfig{-0.1, 0.0, 0}.validate()), Error);
    EXPECT_THROW((DropConfig{0.0, 1.5, 0}.validate()), Error);
    EXPECT_THROW((DropConfig{std::nan(""), 0.0, 0}.validate()), Error);
    EXPECT_NO_THROW((DropConfig{0.0, 1.0, 0}.validate()));
}

TEST(Transmit, DeliversUnchangedOrNothing) {
    DropConfig cfg{0.5, 0.5, 3};
    const GradientPiece piece{2, 0, {1.0, 2.0, 3.0}};
    std::size_t got = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto out = transmit(piece, cfg, Phase::Gradient, t, 0, 2, 2);
        ASSERT_EQ(out.has_value(), drop_decision(cfg, Phase::Gradient, t, 0, 2, 2));
        if (out) {
            EXPECT_EQ(out->values, piece.values);
            ++got;
        }
    }
    EXPECT_GT(got, 0u);
    EXPECT_LT(got, 100u);
}

TEST(Transmit, RejectsShardMismatch) {
    DropConfig cfg{0.0, 0.0, 3};
    const ParamShardMsg msg{1, 1, {1.0}};
    EXPECT_THROW(transmit(msg, cfg, Phase::Parameter, 0, 1, 0, 2), Error);
}

TEST(CounterHash, PermutedTuplesDiffer) {
    EXPECT_NE(counter_hash(1, {1, 2, 3}), counter_hash(1, {3, 2, 1}));
    EXPECT_NE(counter_hash(1, {1, 2}), counter_hash(2, {1, 2}));
    EXPECT_EQ(counter_hash(1, {1, 2}), counter_hash(1, {1, 2}));
    EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
}
