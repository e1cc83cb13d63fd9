// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: single runs, drop-rate sweeps, CSV persistence
// and baseline comparison reports.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lossync/config.hpp"

namespace lossync {

/// One CSV row, recorded after each completed iteration. The scalar columns
/// are means over shards; the per-shard vectors go to shards.csv.
struct MetricsRow {
    std::size_t iter = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double recv_frac = 0.0;
    double drift = 0.0;
    double sigma2_hat = 0.0;
    std::vector<double> shard_recv_frac;
    std::vector<double> shard_drift;
    std::vector<double> shard_sigma2_hat;
};

struct RunSummary {
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    double steady_drift = 0.0;               // mean drift over the second half of the run
    std::optional<double> predicted_drift;   // 2p/(1+p) * sigma2_hat over the same span; none when p_param = 1
};

struct RunMetrics {
    std::vector<MetricsRow> rows;
    RunSummary summary;
    std::string signature;  // model/dataset/iterations fingerprint; empty when loaded from CSV
};

/// Drives iteration_step for cfg.iterations steps. No file output.
RunMetrics simulate(const ExperimentConfig& cfg);

/// simulate() plus metrics.csv, shards.csv, drift.csv, summary.csv and
/// config.json under cfg.output_dir.
RunMetrics run_experiment(const ExperimentConfig& cfg);

void write_run_outputs(const RunMetrics& metrics, const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Reads a metrics.csv written by write_run_outputs.
RunMetrics load_metrics_csv(const std::filesystem::path& path);

struct SweepEntry {
    double p = 0.0;
    std::size_t runs = 0;
    double mean_train_loss = 0.0;
    double std_train_loss = 0.0;
    double mean_val_loss = 0.0;
    double std_val_loss = 0.0;
    double mean_drift = 0.0;
    double std_drift = 0.0;
};

struct SweepSummary {
    std::vector<SweepEntry> entries;
    std::vector<std::vector<RunSummary>> runs;  // [p index][seed index]
};

/// One run per (p, seed) with p_grad = p_param = p and seeds cfg.seed .. cfg.seed + seeds - 1.
/// Writes each run under <output_dir>/p<p>_seed<s>/ and the table to <output_dir>/sweep.csv
/// when `write_files` is set. `threads` > 1 runs entries concurrently; results are unaffected.
SweepSummary sweep(const ExperimentConfig& cfg, const std::vector<double>& p_list, std::size_t seeds,
                   bool write_files = true, std::size_t threads = 1);

void write_sweep_csv(const SweepSummary& summary, const std::filesystem::path& path);

/// "+0.49%" style signed relative change, or "n/a" when baseline is zero.
std::string format_relative_change(double value, double baseline);

struct ComparisonLine {
    std::string metric;
    double value = 0.0;
    double baseline = 0.0;
    std::optional<double> relative_change_pct;
    std::string formatted;  // "value (+x.xx%)"
};

struct ComparisonReport {
    std::vector<ComparisonLine> lines;

    std::string to_string() const;
};

/// Final-metric comparison of `run` against `baseline`; throws on mismatched runs.
ComparisonReport compare_baseline(const RunMetrics& run, const RunMetrics& baseline);

}  // namespace lossync
