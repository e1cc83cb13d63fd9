// SPDX-License-Identifier: Apache-2.0
//
// lossync command-line entry point.
//
//   lossync run --config cfg.json [--p-grad F] [--p-param F] [--workers N] [--iters T]
//               [--seed S] [--policy NAME] [--out DIR]
//   lossync sweep --config cfg.json --p-list 0,0.1,0.2,0.3,0.4 --seeds 5
//   lossync verify-drift --p F --sigma2 F --trials K --iters T
//   lossync compare --run A.csv --baseline B.csv

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "lossync/drift.hpp"
#include "lossync/harness.hpp"

namespace {

using namespace lossync;

std::vector<double> parse_p_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw Error(fmt::format("--p-list: cannot parse '{}'", item));
        out.push_back(v);
    }
    if (out.empty()) throw Error("--p-list: no values given");
    return out;
}

void print_summary(const RunMetrics& m, const ExperimentConfig& cfg) {
    const auto& s = m.summary;
    fmt::print("final_train_loss {}\n", s.final_train_loss);
    fmt::print("final_val_loss   {}\n", s.final_val_loss);
    if (s.predicted_drift) {
        fmt::print("steady_drift     {} (analytic 2p/(1+p)*sigma2_hat = {}, p_param = {})\n", s.steady_drift,
                   *s.predicted_drift, cfg.p_param);
    } else {
        fmt::print("steady_drift     {} (no analytic value at p_param = 1)\n", s.steady_drift);
    }
    fmt::print("outputs in {}\n", cfg.output_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic simulator of sharded data-parallel SGD over lossy links"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run one experiment and write its CSV outputs");
    std::string run_config;
    std::optional<double> p_grad, p_param;
    std::optional<std::size_t> workers, iters;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> policy, out_dir;
    run->add_option("--config", run_config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    run->add_option("--p-grad", p_grad, "Gradient-phase drop rate")->check(CLI::Range(0.0, 1.0));
    run->add_option("--p-param", p_param, "Parameter-phase drop rate")->check(CLI::Range(0.0, 1.0));
    run->add_option("--workers", workers, "Number of workers (= shards)");
    run->add_option("--iters", iters, "Training iterations");
    run->add_option("--seed", seed, "Experiment seed");
    run->add_option("--policy", policy, "omit_renormalize or stale_substitute");
    run->add_option("--out", out_dir, "Output directory");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Run every (p, seed) combination and summarize per p");
    std::string sweep_config;
    std::string p_list_text;
    std::size_t sweep_seeds = 1;
    std::size_t sweep_threads = 1;
    std::optional<std::string> sweep_out;
    sw->add_option("--config", sweep_config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sw->add_option("--p-list", p_list_text, "Comma-separated drop rates (defaults to the config's p_list)");
    sw->add_option("--seeds", sweep_seeds, "Seeds per drop rate")->check(CLI::PositiveNumber);
    sw->add_option("--threads", sweep_threads, "Concurrent runs")->check(CLI::PositiveNumber);
    sw->add_option("--out", sweep_out, "Output directory");

    // verify-drift
    auto* vd = app.add_subcommand("verify-drift", "Monte Carlo drift process versus the analytic steady state");
    double vd_p = 0.1, vd_sigma2 = 1.0, vd_tol = 0.05;
    std::size_t vd_trials = 100000, vd_iters = 500, vd_threads = 1;
    std::uint64_t vd_seed = 1;
    std::optional<std::string> vd_out;
    vd->add_option("--p", vd_p, "Drop rate")->required()->check(CLI::Range(0.0, 1.0));
    vd->add_option("--sigma2", vd_sigma2, "Update variance")->required()->check(CLI::NonNegativeNumber);
    vd->add_option("--trials", vd_trials, "Replica pairs")->check(CLI::PositiveNumber);
    vd->add_option("--iters", vd_iters, "Broadcasts per trial")->check(CLI::PositiveNumber);
    vd->add_option("--seed", vd_seed, "Monte Carlo seed");
    vd->add_option("--tolerance", vd_tol, "Relative tolerance on the tail mean");
    vd->add_option("--threads", vd_threads, "Worker threads")->check(CLI::PositiveNumber);
    vd->add_option("--out", vd_out, "Write source,t,E_t CSV here");

    // compare
    auto* cmp = app.add_subcommand("compare", "Relative change of a run's final metrics against a baseline");
    std::string cmp_run, cmp_base;
    cmp->add_option("--run", cmp_run, "metrics.csv of the run")->required()->check(CLI::ExistingFile);
    cmp->add_option("--baseline", cmp_base, "metrics.csv of the baseline")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            ExperimentConfig cfg = load_config(run_config);
            if (p_grad) cfg.p_grad = *p_grad;
            if (p_param) cfg.p_param = *p_param;
            if (workers) {
                cfg.workers = *workers;
                cfg.shards = 0;
            }
            if (iters) cfg.iterations = *iters;
            if (seed) cfg.seed = *seed;
            if (policy) cfg.policy.variant = parse_variant(*policy);
            if (out_dir) cfg.output_dir = *out_dir;
            const RunMetrics m = run_experiment(cfg);
            print_summary(m, cfg);
        } else if (sw->parsed()) {
            ExperimentConfig cfg = load_config(sweep_config);
            if (sweep_out) cfg.output_dir = *sweep_out;
            const std::vector<double> ps = p_list_text.empty() ? cfg.p_list : parse_p_list(p_list_text);
            if (ps.empty()) throw Error("sweep: no drop rates (use --p-list or p_list in the config)");
            const SweepSummary s = sweep(cfg, ps, sweep_seeds, true, sweep_threads);
            fmt::print("{:>6} {:>5} {:>22} {:>22} {:>12}\n", "p", "runs", "train_loss", "val_loss", "drift");
            for (const auto& e : s.entries) {
                fmt::print("{:>6} {:>5} {:>12.6g} ±{:<9.3g} {:>12.6g} ±{:<9.3g} {:>12.4g}\n", e.p, e.runs,
                           e.mean_train_loss, e.std_train_loss, e.mean_val_loss, e.std_val_loss, e.mean_drift);
            }
            const double base_train = s.entries.front().mean_train_loss;
            for (const auto& e : s.entries) {
                fmt::print("p={}: train_loss {:.6g} ({})\n", e.p, e.mean_train_loss,
                           format_relative_change(e.mean_train_loss, base_train));
            }
            fmt::print("summary in {}/sweep.csv\n", cfg.output_dir);
        } else if (vd->parsed()) {
            if (vd_p >= 1.0) throw Error("verify-drift: p must be < 1 for a finite steady state");
            const DriftCheck c = verify_drift(vd_p, vd_sigma2, vd_trials, vd_iters, vd_seed, vd_tol, vd_threads);
            fmt::print("p={} sigma2={} trials={} iters={}\n", vd_p, vd_sigma2, vd_trials, vd_iters);
            fmt::print("monte carlo tail mean  {:.6f}\n", c.tail_mean);
            fmt::print("2p/(1+p)*sigma2        {:.6f}\n", c.predicted);
            fmt::print("relative error         {:.4f} (tolerance {})\n", c.relative_error, vd_tol);
            fmt::print("{}\n", c.within_tolerance ? "PASS" : "FAIL");
            if (vd_out) {
                std::ofstream out(*vd_out, std::ios::binary | std::ios::trunc);
                if (!out) throw Error(fmt::format("cannot write '{}'", *vd_out));
                const DriftTrajectory series[] = {c.monte_carlo,
                                                  recurrence_trajectory(vd_iters, 0.0, vd_p, vd_sigma2),
                                                  closed_form_trajectory(vd_iters, 0.0, vd_p, vd_sigma2)};
                write_trajectories_csv(out, series);
            }
            return c.within_tolerance ? 0 : 1;
        } else if (cmp->parsed()) {
            const RunMetrics a = load_metrics_csv(cmp_run);
            const RunMetrics b = load_metrics_csv(cmp_base);
            fmt::print("{}", compare_baseline(a, b).to_string());
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
