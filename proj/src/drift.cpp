// SPDX-License-Identifier: Apache-2.0

#include "lossync/drift.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

#include <fmt/core.h>
#include <fmt/ostream.h>

namespace lossync {

std::string_view to_string(DriftSource source) {
    switch (source) {
        case DriftSource::Recurrence: return "recurrence";
        case DriftSource::ClosedForm: return "closed_form";
        case DriftSource::MonteCarlo: return "monte_carlo";
        case DriftSource::LiveTraining: return "live_training";
    }
    return "?";
}

double DriftTrajectory::tail_mean(std::size_t from) const {
    if (from >= values.size()) {
        throw Error(fmt::format("tail_mean: start {} beyond trajectory of length {}", from, values.size()));
    }
    double s = 0.0;
    for (std::size_t t = from; t < values.size(); ++t) s += values[t];
    return s / static_cast<double>(values.size() - from);
}

namespace {

void check_drop_rate(double p, const char* what) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw Error(fmt::format("{}: drop rate must lie in [0, 1), got {}", what, p));
    }
}

void check_nonnegative(double v, const char* name, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(fmt::format("{}: {} must be finite and >= 0, got {}", what, name, v));
    }
}

}  // namespace

double drift_recurrence_step(double e_t, double p, double sigma2) {
    check_drop_rate(p, "drift_recurrence_step");
    check_nonnegative(e_t, "E_t", "drift_recurrence_step");
    check_nonnegative(sigma2, "sigma2", "drift_recurrence_step");
    return p * p * e_t + 2.0 * p * (1.0 - p) * sigma2;
}

double drift_closed_form(std::uint64_t t, double e0, double p, double sigma2) {
    check_drop_rate(p, "drift_closed_form");
    check_nonnegative(e0, "E_0", "drift_closed_form");
    check_nonnegative(sigma2, "sigma2", "drift_closed_form");
    const double q = p * p;
    const double qt = std::pow(q, static_cast<double>(t));
    return qt * e0 + 2.0 * p * (1.0 - p) * sigma2 * (1.0 - qt) / (1.0 - q);
}

double drift_steady_state(double p, double sigma2) {
    check_drop_rate(p, "drift_steady_state");
    check_nonnegative(sigma2, "sigma2", "drift_steady_state");
    return 2.0 * p / (1.0 + p) * sigma2;
}

DriftTrajectory recurrence_trajectory(std::size_t iterations, double e0, double p, double sigma2) {
    DriftTrajectory out{DriftSource::Recurrence, {}};
    out.values.reserve(iterations + 1);
    double e = e0;
    out.values.push_back(e);
    for (std::size_t t = 0; t < iterations; ++t) {
        e = drift_recurrence_step(e, p, sigma2);
        out.values.push_back(e);
    }
    return out;
}

DriftTrajectory closed_form_trajectory(std::size_t iterations, double e0, double p, double sigma2) {
    DriftTrajectory out{DriftSource::ClosedForm, {}};
    out.values.reserve(iterations + 1);
    for (std::size_t t = 0; t <= iterations; ++t) out.values.push_back(drift_closed_form(t, e0, p, sigma2));
    return out;
}

double drift_case_table(double d_t, bool first_received, bool second_received, double delta) {
    if (first_received && second_received) return 0.0;
    if (first_received) return delta;
    if (second_received) return -delta;
    return d_t;
}

DriftTrajectory mc_drift_process(double p, const UpdateSampler& sampler, std::size_t iterations,
                                 std::size_t trials, std::uint64_t seed, std::size_t threads) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(fmt::format("mc_drift_process: p must lie in [0, 1], got {}", p));
    check_nonnegative(sampler.sigma2, "sigma2", "mc_drift_process");
    if (iterations == 0) throw Error("mc_drift_process: need at least one iteration");
    if (trials == 0) throw Error("mc_drift_process: need at least one trial");
    threads = std::max<std::size_t>(1, threads);

    constexpr std::size_t kChunk = 1024;
    const std::size_t chunks = (trials + kChunk - 1) / kChunk;
    const std::size_t len = iterations + 1;
    std::vector<std::vector<double>> partial(chunks, std::vector<double>(len, 0.0));

    const double sigma = std::sqrt(sampler.sigma2);
    auto run_chunk = [&](std::size_t c) {
        std::vector<double>& acc = partial[c];
        const std::size_t first = c * kChunk;
        const std::size_t last = std::min(trials, first + kChunk);
        for (std::size_t trial = first; trial < last; ++trial) {
            SplitMixEngine engine(counter_hash(seed, {0xd71f7ULL, trial}));
            std::normal_distribution<double> normal(0.0, sigma);
            double d = 0.0;
            for (std::size_t t = 0; t < iterations; ++t) {
                const bool first_rx = engine.uniform() >= p;
                const bool second_rx = engine.uniform() >= p;
                double delta = 0.0;
                if (first_rx != second_rx) {
                    if (sampler.distribution == UpdateSampler::Distribution::Gaussian) {
                        delta = normal(engine);
                    } else {
                        delta = (engine() >> 63) ? sigma : -sigma;
                    }
                }
                d = drift_case_table(d, first_rx, second_rx, delta);
                acc[t + 1] += d * d;
            }
        }
    };

    if (threads == 1 || chunks == 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(threads, chunks); ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t c = w; c < chunks; c += threads) run_chunk(c);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        pool.clear();
        if (failure) std::rethrow_exception(failure);
    }

    DriftTrajectory out{DriftSource::MonteCarlo, std::vector<double>(len, 0.0)};
    for (const auto& acc : partial) {
        for (std::size_t t = 0; t < len; ++t) out.values[t] += acc[t];
    }
    for (double& v : out.values) v /= static_cast<double>(trials);
    return out;
}

double estimate_sigma2(std::span<const std::vector<double>> update_history, std::size_t window) {
    if (window == 0) throw Error("estimate_sigma2: window must be positive");
    if (update_history.empty()) throw Error("estimate_sigma2: empty update history");
    const std::size_t used = std::min(window, update_history.size());
    double total = 0.0;
    for (std::size_t r = update_history.size() - used; r < update_history.size(); ++r) {
        const auto& u = update_history[r];
        if (u.empty()) throw Error("estimate_sigma2: zero-length update vector");
        double sq = 0.0;
        for (double v : u) sq += v * v;
        total += sq / static_cast<double>(u.size());
    }
    return total / static_cast<double>(used);
}

std::vector<WorkerPair> drift_pairs(std::size_t workers, std::uint64_t seed) {
    std::vector<WorkerPair> all;
    for (std::size_t i = 0; i < workers; ++i) {
        for (std::size_t k = i + 1; k < workers; ++k) all.emplace_back(i, k);
    }
    constexpr std::size_t kSampled = 32;
    if (workers <= 8 || all.size() <= kSampled) return all;
    SplitMixEngine engine(derive_seed(seed, 0x9a125));
    // Partial Fisher-Yates: the first kSampled entries become the sample.
    for (std::size_t r = 0; r < kSampled; ++r) {
        const std::size_t pick = r + static_cast<std::size_t>(engine() % (all.size() - r));
        std::swap(all[r], all[pick]);
    }
    all.resize(kSampled);
    std::sort(all.begin(), all.end());
    return all;
}

std::vector<double> pairwise_drift(std::span<const ParamVector> views, const ShardLayout& layout,
                                   std::size_t shard, std::span<const WorkerPair> pairs) {
    if (views.size() < 2) throw Error(fmt::format("pairwise_drift: need at least 2 workers, got {}", views.size()));
    const double dim = static_cast<double>(layout.shard_size(shard));
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& [i, k] : pairs) {
        if (i >= views.size() || k >= views.size() || i == k) {
            throw Error(fmt::format("pairwise_drift: invalid pair ({}, {})", i, k));
        }
        const auto a = layout.slice(std::span<const double>(views[i]), shard);
        const auto b = layout.slice(std::span<const double>(views[k]), shard);
        double sq = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) {
            const double diff = a[c] - b[c];
            sq += diff * diff;
        }
        out.push_back(sq / dim);
    }
    return out;
}

std::vector<double> pairwise_drift(std::span<const ParamVector> views, const ShardLayout& layout,
                                   std::size_t shard) {
    if (views.size() < 2) throw Error(fmt::format("pairwise_drift: need at least 2 workers, got {}", views.size()));
    std::vector<WorkerPair> pairs;
    for (std::size_t i = 0; i < views.size(); ++i) {
        for (std::size_t k = i + 1; k < views.size(); ++k) pairs.emplace_back(i, k);
    }
    return pairwise_drift(views, layout, shard, pairs);
}

DriftCheck verify_drift(double p, double sigma2, std::size_t trials, std::size_t iterations, std::uint64_t seed,
                        double tolerance, std::size_t threads) {
    DriftCheck check;
    check.p = p;
    check.sigma2 = sigma2;
    check.predicted = drift_steady_state(p, sigma2);
    check.monte_carlo = mc_drift_process(p, UpdateSampler{UpdateSampler::Distribution::Gaussian, sigma2},
                                         iterations, trials, seed, threads);
    check.tail_mean = check.monte_carlo.tail_mean(iterations / 2);
    if (check.predicted > 0.0) {
        check.relative_error = std::abs(check.tail_mean - check.predicted) / check.predicted;
        check.within_tolerance = check.relative_error <= tolerance;
    } else {
        check.relative_error = check.tail_mean;
        check.within_tolerance = check.tail_mean == 0.0;
    }
    return check;
}

void write_trajectories_csv(std::ostream& out, std::span<const DriftTrajectory> trajectories) {
    out << "source,t,E_t\n";
    for (const auto& traj : trajectories) {
        for (std::size_t t = 0; t < traj.values.size(); ++t) {
            fmt::print(out, "{},{},{}\n", to_string(traj.source), t, traj.values[t]);
        }
    }
}

}  // namespace lossync
