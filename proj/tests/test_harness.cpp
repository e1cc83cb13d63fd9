// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lossync/harness.hpp"
#include "test_support.hpp"

using namespace lossync;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const char* env = std::getenv("LOSSYNC_TEST_TMP");
    const fs::path root = env ? fs::path(env) : fs::temp_directory_path() / "lossync_tests";
    const fs::path dir = root / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.workers = 4;
    cfg.model = Model{ModelKind::LeastSquares, 12, 0};
    cfg.iterations = 200;
    cfg.learning_rate = LearningRate{0.05, 0.0};
    cfg.seed = 9;
    return cfg;
}

}  // namespace

TEST(RunExperiment, TwiceGivesByteIdenticalFiles) {
    auto cfg = small_config();
    cfg.p_grad = cfg.p_param = 0.2;
    const auto a = scratch("det_a"), b = scratch("det_b");
    cfg.output_dir = a.string();
    run_experiment(cfg);
    cfg.output_dir = b.string();
    run_experiment(cfg);
    for (const char* f : {"metrics.csv", "shards.csv", "drift.csv", "summary.csv"}) {
        EXPECT_FALSE(slurp(a / f).empty()) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
}

TEST(RunExperiment, WritesExpectedColumns) {
    auto cfg = small_config();
    cfg.iterations = 5;
    const auto dir = scratch("columns");
    cfg.output_dir = dir.string();
    run_experiment(cfg);
    std::ifstream in(dir / "metrics.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "iter,train_loss,val_loss,recv_frac,drift,sigma2_hat");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 5u);
    EXPECT_TRUE(fs::exists(dir / "config.json"));
    EXPECT_EQ(load_config(dir / "config.json").iterations, 5u);
}

TEST(Simulate, NoBroadcastLossMeansNoDrift) {
    auto cfg = small_config();
    cfg.p_grad = 0.4;
    cfg.p_param = 0.0;
    const auto m = simulate(cfg);
    ASSERT_EQ(m.rows.size(), cfg.iterations);
    for (const auto& r : m.rows) {
        EXPECT_EQ(r.drift, 0.0);
        EXPECT_LE(r.recv_frac, 1.0);
    }
}

TEST(Simulate, RowsAreConsistentWithSummary) {
    auto cfg = small_config();
    cfg.p_grad = cfg.p_param = 0.3;
    const auto m = simulate(cfg);
    double drift = 0.0, s2 = 0.0;
    for (std::size_t r = 100; r < 200; ++r) {
        drift += m.rows[r].drift;
        s2 += m.rows[r].sigma2_hat;
        double mean = 0.0;
        for (double v : m.rows[r].shard_drift) mean += v;
        EXPECT_NEAR(m.rows[r].drift, mean / 4.0, 1e-15);
        for (double v : m.rows[r].shard_recv_frac) {
            const double k = v * 4.0;
            EXPECT_EQ(k, std::round(k));
        }
    }
    EXPECT_NEAR(m.summary.steady_drift, drift / 100.0, 1e-9 * std::max(1e-30, drift / 100.0));
    ASSERT_TRUE(m.summary.predicted_drift);
    EXPECT_NEAR(*m.summary.predicted_drift, 2.0 * 0.3 / 1.3 * s2 / 100.0, 1e-9 * *m.summary.predicted_drift);
    EXPECT_EQ(m.summary.final_train_loss, m.rows.back().train_loss);
}

TEST(Simulate, LosslessMatchesReferenceLosses) {
    auto cfg = small_config();
    cfg.micro_batches = 2;
    const auto m = simulate(cfg);
    const auto seeds = seed_lineage(cfg.seed);
    const auto data = make_synthetic_dataset(seeds.dataset, cfg.model.kind, cfg.dataset.samples, cfg.model.features,
                                             cfg.dataset.noise);
    const auto ref = lossync::testing::reference_sgd(cfg.model, data, cfg.workers, 2, cfg.batch_size, seeds.batches,
                                                     cfg.learning_rate, cfg.model.initial_params(seeds.init),
                                                     cfg.iterations);
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        ASSERT_EQ(m.rows[t].train_loss, evaluate_loss(cfg.model, ref[t], data, data.train)) << t;
    }
}

TEST(Simulate, ModerateLossStaysNearBaseline) {
    auto cfg = small_config();
    cfg.workers = 8;
    cfg.model = Model{ModelKind::LeastSquares, 16, 0};
    cfg.iterations = 2000;
    const double base = simulate(cfg).summary.final_train_loss;
    cfg.p_grad = cfg.p_param = 0.2;
    const double lossy = simulate(cfg).summary.final_train_loss;
    EXPECT_LT(std::abs(lossy - base) / base, 0.10);
}

TEST(Sweep, SingleLosslessEntryEqualsSingleRun) {
    auto cfg = small_config();
    const auto s = sweep(cfg, {0.0}, 1, false);
    const auto m = simulate(cfg);
    ASSERT_EQ(s.entries.size(), 1u);
    EXPECT_EQ(s.entries[0].mean_train_loss, m.summary.final_train_loss);
    EXPECT_EQ(s.entries[0].mean_val_loss, m.summary.final_val_loss);
    EXPECT_EQ(s.entries[0].std_train_loss, 0.0);
}

TEST(Sweep, RepeatableAndThreadIndependent) {
    auto cfg = small_config();
    const auto a = scratch("sweep_a"), b = scratch("sweep_b");
    cfg.output_dir = a.string();
    sweep(cfg, {0.0, 0.2}, 3, true, 1);
    cfg.output_dir = b.string();
    sweep(cfg, {0.0, 0.2}, 3, true, 3);
    EXPECT_EQ(slurp(a / "sweep.csv"), slurp(b / "sweep.csv"));
    EXPECT_EQ(slurp(a / "p0.2_seed10" / "metrics.csv"), slurp(b / "p0.2_seed10" / "metrics.csv"));
}

TEST(Sweep, StatisticsMatchRuns) {
    auto cfg = small_config();
    const auto s = sweep(cfg, {0.3}, 4, false);
    double mean = 0.0;
    for (const auto& r : s.runs[0]) mean += r.final_train_loss;
    mean /= 4.0;
    double ss = 0.0;
    for (const auto& r : s.runs[0]) ss += (r.final_train_loss - mean) * (r.final_train_loss - mean);
    EXPECT_NEAR(s.entries[0].mean_train_loss, mean, 1e-9 * mean);
    EXPECT_NEAR(s.entries[0].std_train_loss, std::sqrt(ss / 3.0), 1e-9 * mean);
    auto seeded = cfg;
    seeded.p_grad = seeded.p_param = 0.3;
    seeded.seed = cfg.seed + 2;
    EXPECT_EQ(s.runs[0][2].final_train_loss, simulate(seeded).summary.final_train_loss);
    EXPECT_THROW(sweep(cfg, {}, 1, false), Error);
}

TEST(Compare, RelativeChangeFormatting) {
    EXPECT_EQ(format_relative_change(1.653, 1.645), "+0.49%");
    EXPECT_EQ(format_relative_change(1.0, 1.0), "+0.00%");
    EXPECT_EQ(format_relative_change(0.9, 1.0), "-10.00%");
    EXPECT_EQ(format_relative_change(1.0, 0.0), "n/a");
}

TEST(Compare, ReportAgainstBaseline) {
    RunMetrics run, base;
    run.rows.resize(3);
    base.rows.resize(3);
    run.summary = RunSummary{1.653, 2.0, 0.0, std::nullopt};
    base.summary = RunSummary{1.645, 2.0, 0.0, std::nullopt};
    const auto r = compare_baseline(run, base);
    ASSERT_EQ(r.lines.size(), 3u);
    EXPECT_EQ(r.lines[0].formatted, "1.653 (+0.49%)");
    EXPECT_NEAR(*r.lines[0].relative_change_pct, (1.653 - 1.645) / 1.645 * 100.0, 1e-9);
    EXPECT_EQ(r.lines[1].formatted, "2 (+0.00%)");
    EXPECT_FALSE(r.lines[2].relative_change_pct.has_value());
    EXPECT_NE(r.to_string().find("n/a"), std::string::npos);
    base.rows.resize(4);
    EXPECT_THROW(compare_baseline(run, base), Error);
}

TEST(Compare, LoadedCsvRoundTrip) {
    auto cfg = small_config();
    cfg.iterations = 50;
    const auto dir = scratch("roundtrip");
    cfg.output_dir = dir.string();
    const auto m = run_experiment(cfg);
    const auto loaded = load_metrics_csv(dir / "metrics.csv");
    ASSERT_EQ(loaded.rows.size(), 50u);
    for (std::size_t r = 0; r < 50; ++r) {
        EXPECT_EQ(loaded.rows[r].train_loss, m.rows[r].train_loss);
        EXPECT_EQ(loaded.rows[r].drift, m.rows[r].drift);
    }
    EXPECT_EQ(loaded.summary.final_train_loss, m.summary.final_train_loss);
    const auto self = compare_baseline(loaded, loaded);
    for (const auto& l : self.lines) {
        if (l.baseline != 0.0) {
            EXPECT_NE(l.formatted.find("(+0.00%)"), std::string::npos);
        }
    }
    std::ofstream(dir / "bad.csv") << "a,b\n1,2\n";
    EXPECT_THROW(load_metrics_csv(dir / "bad.csv"), Error);
}

TEST(Config, ParsesAndRejects) {
    const auto cfg = config_from_json(nlohmann::json::parse(R"({
        "workers": 8, "model": {"kind": "logistic", "features": 16},
        "learning_rate": {"base": 0.5, "decay": 0.01}, "p_grad": 0.1,
        "policy": {"variant": "stale_substitute", "fallback": "skip"}})"));
    EXPECT_EQ(cfg.workers, 8u);
    EXPECT_EQ(cfg.model.kind, ModelKind::LogisticRegression);
    EXPECT_EQ(cfg.learning_rate.decay, 0.01);
    EXPECT_EQ(cfg.policy.variant, AggregationVariant::StaleSubstitute);
    EXPECT_EQ(cfg.policy.fallback, ZeroSurvivorFallback::SkipUpdate);
    EXPECT_EQ(config_from_json(nlohmann::json::parse(R"({"learning_rate": 0.2})")).learning_rate.base, 0.2);

    auto expect_error = [](const char* text, const char* field) {
        try {
            config_from_json(nlohmann::json::parse(text)).validate();
            ADD_FAILURE() << "accepted " << text;
        } catch (const Error& e) {
            EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
        }
    };
    expect_error(R"({"wrokers": 4})", "wrokers");
    expect_error(R"({"p_grad": 1.5})", "p_grad");
    expect_error(R"({"workers": 4, "shards": 8})", "shards");
    expect_error(R"({"model": {"kind": "transformer"}})", "model");
    expect_error(R"({"policy": {"variant": "mean"}})", "policy");
    expect_error(R"({"workers": 64, "model": {"features": 64}, "batch_size": 64})", "batch_size");
}

TEST(Config, JsonRoundTrip) {
    auto cfg = small_config();
    cfg.p_list = {0.0, 0.1};
    cfg.policy.fallback = ZeroSurvivorFallback::ZeroGradient;
    const auto back = config_from_json(config_to_json(cfg));
    EXPECT_EQ(config_to_json(back), config_to_json(cfg));
}

TEST(Config, SeedStreamsDistinct) {
    const auto s = seed_lineage(1);
    const std::vector<std::uint64_t> all{s.dataset, s.drops, s.batches, s.init, s.drift_pairs};
    for (std::size_t a = 0; a < all.size(); ++a)
        for (std::size_t b = a + 1; b < all.size(); ++b) EXPECT_NE(all[a], all[b]);
}
