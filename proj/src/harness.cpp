// SPDX-License-Identifier: Apache-2.0

#include "lossync/harness.hpp"

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "lossync/drift.hpp"

namespace lossync {

namespace {

constexpr const char* kMetricsHeader = "iter,train_loss,val_loss,recv_frac,drift,sigma2_hat";

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::string run_signature(const ExperimentConfig& cfg) {
    return fmt::format("{}/f{}/h{}/n{}/noise{}/T{}/W{}", to_string(cfg.model.kind), cfg.model.features,
                       cfg.model.hidden, cfg.dataset.samples, cfg.dataset.noise, cfg.iterations, cfg.workers);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    return out;
}

}  // namespace

RunMetrics simulate(const ExperimentConfig& cfg) {
    cfg.validate();
    const SeedLineage seeds = seed_lineage(cfg.seed);
    const ShardLayout layout = shard_partition(cfg.model.dim(), cfg.workers);
    const Dataset data =
        make_synthetic_dataset(seeds.dataset, cfg.model.kind, cfg.dataset.samples, cfg.model.features,
                               cfg.dataset.noise);
    BatchSampler sampler(data, cfg.workers, cfg.micro_batches, cfg.batch_size, seeds.batches);
    std::vector<WorkerState> states = init_workers(layout, cfg.model.initial_params(seeds.init));

    const DropConfig drop{cfg.p_grad, cfg.p_param, seeds.drops};
    IterationConfig iteration;
    iteration.micro_batches = cfg.micro_batches;
    iteration.learning_rate = cfg.learning_rate;
    iteration.policy = cfg.policy;
    StepOptions options;
    options.parallel = cfg.parallel;
    options.drift_pairs = drift_pairs(cfg.workers, seeds.drift_pairs);

    const std::span<const std::size_t> validation_rows =
        data.validation.empty() ? std::span<const std::size_t>(data.train) : std::span<const std::size_t>(data.validation);

    const std::size_t n = cfg.workers;
    std::vector<std::vector<std::vector<double>>> history(n);
    RunMetrics metrics;
    metrics.signature = run_signature(cfg);
    metrics.rows.reserve(cfg.iterations);
    for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
        IterationMetrics step = iteration_step(states, cfg.model, sampler, layout, drop, iteration, t, options);

        MetricsRow row;
        row.iter = static_cast<std::size_t>(t + 1);
        const ParamVector model = assemble_model(states, layout);
        row.train_loss = evaluate_loss(cfg.model, model, data, data.train);
        row.val_loss = evaluate_loss(cfg.model, model, data, validation_rows);
        row.shard_recv_frac = step.received_fraction;
        row.shard_drift.resize(n);
        row.shard_sigma2_hat.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            history[j].push_back(std::move(step.shard_updates[j]));
            row.shard_sigma2_hat[j] = estimate_sigma2(history[j], cfg.sigma2_window);
            row.shard_drift[j] = mean_of(step.drift_samples[j]);
        }
        row.recv_frac = mean_of(row.shard_recv_frac);
        row.drift = mean_of(row.shard_drift);
        row.sigma2_hat = mean_of(row.shard_sigma2_hat);
        metrics.rows.push_back(std::move(row));
    }

    RunSummary& s = metrics.summary;
    s.final_train_loss = metrics.rows.back().train_loss;
    s.final_val_loss = metrics.rows.back().val_loss;
    const std::size_t from = metrics.rows.size() / 2;
    double drift_sum = 0.0;
    double sigma_sum = 0.0;
    for (std::size_t r = from; r < metrics.rows.size(); ++r) {
        drift_sum += metrics.rows[r].drift;
        sigma_sum += metrics.rows[r].sigma2_hat;
    }
    const double span_len = static_cast<double>(metrics.rows.size() - from);
    s.steady_drift = drift_sum / span_len;
    if (cfg.p_param < 1.0) s.predicted_drift = drift_steady_state(cfg.p_param, sigma_sum / span_len);
    return metrics;
}

void write_run_outputs(const RunMetrics& metrics, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_for_write(dir / "metrics.csv");
        out << kMetricsHeader << '\n';
        for (const auto& r : metrics.rows) {
            fmt::print(out, "{},{},{},{},{},{}\n", r.iter, r.train_loss, r.val_loss, r.recv_frac, r.drift,
                       r.sigma2_hat);
        }
    }
    {
        auto out = open_for_write(dir / "shards.csv");
        out << "iter,shard,recv_frac,drift,sigma2_hat\n";
        for (const auto& r : metrics.rows) {
            for (std::size_t j = 0; j < r.shard_drift.size(); ++j) {
                fmt::print(out, "{},{},{},{},{}\n", r.iter, j, r.shard_recv_frac[j], r.shard_drift[j],
                           r.shard_sigma2_hat[j]);
            }
        }
    }
    {
        DriftTrajectory live{DriftSource::LiveTraining, {0.0}};
        for (const auto& r : metrics.rows) live.values.push_back(r.drift);
        auto out = open_for_write(dir / "drift.csv");
        write_trajectories_csv(out, std::span<const DriftTrajectory>(&live, 1));
    }
    {
        auto out = open_for_write(dir / "summary.csv");
        const auto& s = metrics.summary;
        out << "metric,value\n";
        fmt::print(out, "final_train_loss,{}\n", s.final_train_loss);
        fmt::print(out, "final_val_loss,{}\n", s.final_val_loss);
        fmt::print(out, "steady_drift,{}\n", s.steady_drift);
        if (s.predicted_drift) {
            fmt::print(out, "predicted_drift,{}\n", *s.predicted_drift);
        } else {
            out << "predicted_drift,n/a\n";
        }
    }
    {
        auto out = open_for_write(dir / "config.json");
        out << config_to_json(cfg).dump(2) << '\n';
    }
}

RunMetrics run_experiment(const ExperimentConfig& cfg) {
    RunMetrics metrics = simulate(cfg);
    write_run_outputs(metrics, cfg, cfg.output_dir);
    return metrics;
}

RunMetrics load_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open metrics file '{}'", path.string()));
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw Error(fmt::format("'{}': expected header '{}'", path.string(), kMetricsHeader));
    }
    RunMetrics metrics;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            errno = 0;
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || errno == ERANGE) {
                throw Error(fmt::format("'{}' line {}: cannot parse '{}'", path.string(), line_no, cell));
            }
            fields.push_back(v);
        }
        if (fields.size() != 6) {
            throw Error(fmt::format("'{}' line {}: expected 6 columns, got {}", path.string(), line_no,
                                    fields.size()));
        }
        MetricsRow row;
        row.iter = static_cast<std::size_t>(fields[0]);
        row.train_loss = fields[1];
        row.val_loss = fields[2];
        row.recv_frac = fields[3];
        row.drift = fields[4];
        row.sigma2_hat = fields[5];
        metrics.rows.push_back(std::move(row));
    }
    if (metrics.rows.empty()) throw Error(fmt::format("'{}': no data rows", path.string()));
    metrics.summary.final_train_loss = metrics.rows.back().train_loss;
    metrics.summary.final_val_loss = metrics.rows.back().val_loss;
    const std::size_t from = metrics.rows.size() / 2;
    double drift_sum = 0.0;
    for (std::size_t r = from; r < metrics.rows.size(); ++r) drift_sum += metrics.rows[r].drift;
    metrics.summary.steady_drift = drift_sum / static_cast<double>(metrics.rows.size() - from);
    return metrics;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = mean_of(v);
    if (v.size() < 2) {
        sd = 0.0;
        return;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

SweepSummary sweep(const ExperimentConfig& cfg, const std::vector<double>& p_list, std::size_t seeds,
                   bool write_files, std::size_t threads) {
    if (p_list.empty()) throw Error("sweep: the p list is empty");
    if (seeds == 0) throw Error("sweep: need at least one seed");

    struct Job {
        std::size_t p_index;
        std::size_t seed_index;
        ExperimentConfig cfg;
    };
    std::vector<Job> jobs;
    for (std::size_t a = 0; a < p_list.size(); ++a) {
        for (std::size_t b = 0; b < seeds; ++b) {
            ExperimentConfig run = cfg;
            run.p_grad = p_list[a];
            run.p_param = p_list[a];
            run.seed = cfg.seed + b;
            run.p_list.clear();
            run.output_dir = (std::filesystem::path(cfg.output_dir) / fmt::format("p{}_seed{}", p_list[a], run.seed))
                                 .string();
            run.validate();
            jobs.push_back(Job{a, b, std::move(run)});
        }
    }

    SweepSummary summary;
    summary.runs.assign(p_list.size(), std::vector<RunSummary>(seeds));
    auto execute = [&](const Job& job) {
        const RunMetrics m = simulate(job.cfg);
        if (write_files) write_run_outputs(m, job.cfg, job.cfg.output_dir);
        summary.runs[job.p_index][job.seed_index] = m.summary;
    };

    threads = std::max<std::size_t>(1, threads);
    if (threads == 1) {
        for (const Job& job : jobs) execute(job);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < std::min(threads, jobs.size()); ++w) {
                pool.emplace_back([&] {
                    for (std::size_t k = next++; k < jobs.size(); k = next++) {
                        try {
                            execute(jobs[k]);
                        } catch (...) {
                            std::lock_guard lock(failure_mutex);
                            if (!failure) failure = std::current_exception();
                        }
                    }
                });
            }
        }
        if (failure) std::rethrow_exception(failure);
    }

    for (std::size_t a = 0; a < p_list.size(); ++a) {
        SweepEntry e;
        e.p = p_list[a];
        e.runs = seeds;
        std::vector<double> train, val, drift;
        for (const RunSummary& r : summary.runs[a]) {
            train.push_back(r.final_train_loss);
            val.push_back(r.final_val_loss);
            drift.push_back(r.steady_drift);
        }
        mean_std(train, e.mean_train_loss, e.std_train_loss);
        mean_std(val, e.mean_val_loss, e.std_val_loss);
        mean_std(drift, e.mean_drift, e.std_drift);
        summary.entries.push_back(e);
    }
    if (write_files) write_sweep_csv(summary, std::filesystem::path(cfg.output_dir) / "sweep.csv");
    return summary;
}

void write_sweep_csv(const SweepSummary& summary, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto out = open_for_write(path);
    out << "p,runs,mean_train_loss,std_train_loss,mean_val_loss,std_val_loss,mean_drift,std_drift\n";
    for (const auto& e : summary.entries) {
        fmt::print(out, "{},{},{},{},{},{},{},{}\n", e.p, e.runs, e.mean_train_loss, e.std_train_loss,
                   e.mean_val_loss, e.std_val_loss, e.mean_drift, e.std_drift);
    }
}

std::string format_relative_change(double value, double baseline) {
    if (baseline == 0.0) return "n/a";
    return fmt::format("{:+.2f}%", (value - baseline) / baseline * 100.0);
}

std::string ComparisonReport::to_string() const {
    std::string out;
    for (const auto& l : lines) out += fmt::format("{:<12} {}\n", l.metric, l.formatted);
    return out;
}

ComparisonReport compare_baseline(const RunMetrics& run, const RunMetrics& baseline) {
    if (run.rows.size() != baseline.rows.size()) {
        throw Error(fmt::format("compare_baseline: run has {} iterations, baseline has {}", run.rows.size(),
                                baseline.rows.size()));
    }
    if (!run.signature.empty() && !baseline.signature.empty() && run.signature != baseline.signature) {
        throw Error(fmt::format("compare_baseline: run '{}' and baseline '{}' use different setups", run.signature,
                                baseline.signature));
    }
    ComparisonReport report;
    auto add = [&](const char* name, double value, double base) {
        ComparisonLine l;
        l.metric = name;
        l.value = value;
        l.baseline = base;
        if (base != 0.0) l.relative_change_pct = (value - base) / base * 100.0;
        l.formatted = fmt::format("{:.6g} ({})", value, format_relative_change(value, base));
        report.lines.push_back(std::move(l));
    };
    add("train_loss", run.summary.final_train_loss, baseline.summary.final_train_loss);
    add("val_loss", run.summary.final_val_loss, baseline.summary.final_val_loss);
    add("drift", run.summary.steady_drift, baseline.summary.steady_drift);
    return report;
}

}  // namespace lossync
