// SPDX-License-Identifier: Apache-2.0

#include "lossync/worker.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/core.h>

namespace lossync {

void LearningRate::validate() const {
    if (!(base > 0.0) || !std::isfinite(base)) throw Error(fmt::format("learning rate must be > 0, got {}", base));
    if (!(decay >= 0.0) || !std::isfinite(decay)) {
        throw Error(fmt::format("learning rate decay must be >= 0, got {}", decay));
    }
}

void IterationConfig::validate() const {
    if (micro_batches == 0) throw Error("micro_batches must be >= 1");
    learning_rate.validate();
}

std::vector<WorkerState> init_workers(const ShardLayout& layout, const ParamVector& initial) {
    if (initial.size() != layout.total_dim()) {
        throw Error(fmt::format("init_workers: initial model has {} entries, layout expects {}", initial.size(),
                                layout.total_dim()));
    }
    const std::size_t n = layout.num_shards();
    std::vector<WorkerState> states(n);
    for (std::size_t i = 0; i < n; ++i) {
        WorkerState& s = states[i];
        s.id = i;
        s.full_view = initial;
        const auto own = layout.slice(std::span<const double>(initial), i);
        s.local_shard.assign(own.begin(), own.end());
        s.grad_cache = make_stale_cache(n, layout.shard_size(i));
        s.agg_cache = std::vector<double>(layout.shard_size(i), 0.0);
    }
    return states;
}

IterationError::IterationError(const std::string& what, std::uint64_t iteration, std::size_t worker)
    : Error(fmt::format("iteration {}, worker {}: {}", iteration, worker, what)),
      mIteration(iteration),
      mWorker(worker) {}

LocalGradient compute_local_gradient(const Model& model, std::span<const double> full_view,
                                     std::span<const Batch> batches, const ShardLayout& layout, std::size_t worker,
                                     std::uint64_t t) {
    if (batches.empty()) throw IterationError("no micro-batches", t, worker);
    if (model.dim() != layout.total_dim()) {
        throw IterationError(fmt::format("model dim {} does not match layout dim {}", model.dim(),
                                         layout.total_dim()),
                             t, worker);
    }
    ParamVector sum(model.dim(), 0.0);
    double loss = 0.0;
    try {
        for (const Batch& b : batches) {
            const LossGrad lg = loss_and_grad(model, full_view, b);
            loss += lg.loss;
            for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += lg.grad[k];
        }
    } catch (const IterationError&) {
        throw;
    } catch (const std::exception& e) {
        throw IterationError(e.what(), t, worker);
    }
    const double m = static_cast<double>(batches.size());
    for (double& g : sum) g /= m;

    LocalGradient out;
    out.loss = loss / m;
    out.pieces.reserve(layout.num_shards());
    for (std::size_t j = 0; j < layout.num_shards(); ++j) {
        const auto part = layout.slice(std::span<const double>(sum), j);
        out.pieces.push_back(GradientPiece{j, worker, {part.begin(), part.end()}});
    }
    return out;
}

ParamVector optimizer_update(std::span<const double> local_shard, std::span<const double> gradient, double eta) {
    if (local_shard.size() != gradient.size()) {
        throw Error(fmt::format("optimizer_update: shard has {} entries, gradient {}", local_shard.size(),
                                gradient.size()));
    }
    if (!(eta > 0.0)) throw Error(fmt::format("optimizer_update: learning rate must be > 0, got {}", eta));
    ParamVector out(local_shard.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = local_shard[k] - eta * gradient[k];
    return out;
}

ParamVector optimizer_update(std::span<const double> local_shard, const AggregateResult& aggregate, double eta) {
    if (aggregate.skip_update) return {local_shard.begin(), local_shard.end()};
    return optimizer_update(local_shard, aggregate.gradient, eta);
}

namespace {

// Runs fn(0..n-1), on one thread per index when `parallel` is set. The first
// exception thrown by any index is rethrown after all threads have joined.
template <typename Fn>
void for_each_index(std::size_t n, bool parallel, Fn&& fn) {
    if (!parallel || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            pool.emplace_back([&, i] {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

IterationMetrics iteration_step(std::vector<WorkerState>& states, const Model& model, BatchSampler& sampler,
                                const ShardLayout& layout, const DropConfig& drop, const IterationConfig& cfg,
                                std::uint64_t t, const StepOptions& options) {
    const std::size_t n = layout.num_shards();
    if (states.size() != n) {
        throw IterationError(fmt::format("{} worker states for {} shards", states.size(), n), t, 0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (states[i].id != i || states[i].full_view.size() != layout.total_dim() ||
            states[i].local_shard.size() != layout.shard_size(i)) {
            throw IterationError("worker state inconsistent with shard layout", t, i);
        }
    }

    // The sampler caches epoch permutations, so batches are drawn up front.
    std::vector<std::vector<Batch>> batches(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < cfg.micro_batches; ++m) batches[i].push_back(sampler.sample(i, t, m));
    }

    std::vector<LocalGradient> local(n);
    for_each_index(n, options.parallel, [&](std::size_t i) {
        local[i] = compute_local_gradient(model, states[i].full_view, batches[i], layout, i, t);
    });

    GradientGrid grid(n);
    IterationMetrics metrics;
    metrics.iteration = t;
    for (std::size_t i = 0; i < n; ++i) {
        metrics.mean_batch_loss += local[i].loss;
        grid[i] = std::move(local[i].pieces);
    }
    metrics.mean_batch_loss /= static_cast<double>(n);

    GradientExchangeResult exchange = reduce_scatter_lossy(grid, layout, drop, t);

    const double eta = cfg.learning_rate.at(t);
    metrics.shard_updates.resize(n);
    metrics.update_skipped.assign(n, false);
    metrics.received_fraction.resize(n);
    std::vector<ParamVector> owner_shards(n);
    for_each_index(n, options.parallel, [&](std::size_t j) {
        WorkerState& owner = states[j];
        AggregateResult agg;
        try {
            agg = aggregate(cfg.policy, exchange.received[j], layout.shard_size(j), owner.grad_cache,
                            owner.agg_cache);
        } catch (const std::exception& e) {
            throw IterationError(e.what(), t, j);
        }
        ParamVector updated = optimizer_update(owner.local_shard, agg, eta);
        ParamVector delta(updated.size());
        for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = updated[k] - owner.local_shard[k];
        if (!agg.skip_update) owner.agg_cache = agg.gradient;
        owner.local_shard = updated;
        owner_shards[j] = std::move(updated);
        metrics.shard_updates[j] = std::move(delta);
        metrics.update_skipped[j] = agg.skip_update;
        metrics.received_fraction[j] =
            static_cast<double>(exchange.received_count(j)) / static_cast<double>(n);
    });

    std::vector<ParamVector> prev_views(n);
    for (std::size_t i = 0; i < n; ++i) prev_views[i] = std::move(states[i].full_view);
    AllGatherResult gathered = all_gather_lossy(owner_shards, prev_views, layout, drop, t);
    for (std::size_t i = 0; i < n; ++i) states[i].full_view = std::move(gathered.views[i]);

    metrics.grad_mask = std::move(exchange.mask);
    metrics.param_mask = std::move(gathered.update.mask);

    if (!options.drift_pairs.empty()) {
        std::vector<ParamVector> views(n);
        for (std::size_t i = 0; i < n; ++i) views[i] = states[i].full_view;
        metrics.drift_samples.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            metrics.drift_samples[j] = pairwise_drift(views, layout, j, options.drift_pairs);
        }
    }
    return metrics;
}

ParamVector assemble_model(std::span<const WorkerState> states, const ShardLayout& layout) {
    if (states.size() != layout.num_shards()) {
        throw Error(fmt::format("assemble_model: {} states for {} shards", states.size(), layout.num_shards()));
    }
    ParamVector out(layout.total_dim());
    for (std::size_t j = 0; j < states.size(); ++j) {
        const auto dst = layout.slice(std::span<double>(out), j);
        if (states[j].local_shard.size() != dst.size()) {
            throw Error(fmt::format("assemble_model: worker {} shard has wrong length", j));
        }
        std::copy(states[j].local_shard.begin(), states[j].local_shard.end(), dst.begin());
    }
    return out;
}

}  // namespace lossync
