// SPDX-License-Identifier: Apache-2.0
//
// Per-worker state and one synchronous training iteration:
//
//   gradient compute -> lossy reduce-scatter -> aggregation -> shard update
//   -> lossy all-gather (stale retention)
//
// Worker j owns shard j. Gradients are evaluated at each worker's own,
// possibly stale, full-model view.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lossync/aggregate.hpp"
#include "lossync/collectives.hpp"
#include "lossync/drift.hpp"
#include "lossync/models.hpp"
#include "lossync/netsim.hpp"

namespace lossync {

/// eta_t = base / (1 + decay * t)
struct LearningRate {
    double base = 0.1;
    double decay = 0.0;

    double at(std::uint64_t t) const { return base / (1.0 + decay * static_cast<double>(t)); }
    void validate() const;
};

struct IterationConfig {
    std::size_t micro_batches = 1;
    LearningRate learning_rate;
    AggregationPolicy policy;

    void validate() const;
};

struct WorkerState {
    std::size_t id = 0;
    ParamVector local_shard;  // authoritative copy of shard `id`
    ParamVector full_view;    // possibly stale copy of every shard
    StaleCache grad_cache;    // last delivered piece per sender, StaleSubstitute only
    std::optional<std::vector<double>> agg_cache;  // last applied aggregate
};

/// Every worker starts from the same full model.
std::vector<WorkerState> init_workers(const ShardLayout& layout, const ParamVector& initial);

/// Error raised inside an iteration; carries where it happened.
class IterationError : public Error {
public:
    IterationError(const std::string& what, std::uint64_t iteration, std::size_t worker);

    std::uint64_t iteration() const { return mIteration; }
    std::size_t worker() const { return mWorker; }

private:
    std::uint64_t mIteration;
    std::size_t mWorker;
};

struct LocalGradient {
    double loss = 0.0;  // mean micro-batch loss
    std::vector<GradientPiece> pieces;  // one per shard
};

/// Mean of the micro-batch gradients at `full_view`, split by shard.
LocalGradient compute_local_gradient(const Model& model, std::span<const double> full_view,
                                     std::span<const Batch> batches, const ShardLayout& layout, std::size_t worker,
                                     std::uint64_t t);

/// theta - eta * g; a skipped aggregate leaves the shard untouched.
ParamVector optimizer_update(std::span<const double> local_shard, const AggregateResult& aggregate, double eta);
ParamVector optimizer_update(std::span<const double> local_shard, std::span<const double> gradient, double eta);

struct StepOptions {
    bool parallel = false;
    std::vector<WorkerPair> drift_pairs;  // empty: no drift samples
};

struct IterationMetrics {
    std::uint64_t iteration = 0;
    double mean_batch_loss = 0.0;
    ReceptionMask grad_mask;
    ReceptionMask param_mask;
    std::vector<double> received_fraction;           // per shard, gradient phase
    std::vector<ParamVector> shard_updates;           // per shard, theta_{t+1} - theta_t
    std::vector<bool> update_skipped;                 // per shard
    std::vector<std::vector<double>> drift_samples;   // per shard, one value per drift pair
};

/// Advances every worker by one iteration. Bit-identical whether the
/// per-worker and per-shard work runs sequentially or on threads.
IterationMetrics iteration_step(std::vector<WorkerState>& states, const Model& model, BatchSampler& sampler,
                                const ShardLayout& layout, const DropConfig& drop, const IterationConfig& cfg,
                                std::uint64_t t, const StepOptions& options = {});

/// Concatenation of every owner's local shard.
ParamVector assemble_model(std::span<const WorkerState> states, const ShardLayout& layout);

}  // namespace lossync
