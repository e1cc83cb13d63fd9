// SPDX-License-Identifier: Apache-2.0
//
// Semantic-level collectives. One logical message per (src, dst, shard);
// ring or tree dataflow is not modelled. Reduction order is always ascending
// worker index so results are bitwise reproducible.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lossync/core.hpp"
#include "lossync/netsim.hpp"

namespace lossync {

/// grid[i][j] is worker i's gradient piece for shard j.
using GradientGrid = std::vector<std::vector<GradientPiece>>;

/// Slots indexed by sender; an empty slot is a dropped piece.
using ReceivedSlots = std::vector<std::optional<GradientPiece>>;

struct GradientExchangeResult {
    ReceptionMask mask;                  // phase == Gradient
    std::vector<ReceivedSlots> received;  // [shard][sender]

    std::size_t received_count(std::size_t shard) const;
};

/// What each worker did with each shard broadcast: adopted the new value or kept its view.
struct ParamViewUpdate {
    ReceptionMask mask;  // phase == Parameter

    bool adopted(std::size_t worker, std::size_t shard) const { return mask.at(worker, shard); }
};

struct AllGatherResult {
    std::vector<ParamVector> views;  // one full-model view per worker
    ParamViewUpdate update;
};

/// Gradient sync: every piece (i, j) travels from worker i to shard owner j
/// under p_grad. No aggregation happens here.
GradientExchangeResult reduce_scatter_lossy(const GradientGrid& grid, const ShardLayout& layout,
                                            const DropConfig& cfg, std::uint64_t t);

/// Parameter sync: owner j broadcasts its fresh shard under p_param; receivers
/// that miss it keep their previous value. The owner's own view is always current.
AllGatherResult all_gather_lossy(std::span<const ParamVector> owner_shards, std::span<const ParamVector> prev_views,
                                 const ShardLayout& layout, const DropConfig& cfg, std::uint64_t t);

/// Lossless SUM all-reduce, ascending worker order.
ParamVector all_reduce_reference(std::span<const ParamVector> vectors);

/// SUM of the pieces received for one shard, ascending sender order.
std::vector<double> sum_received(const GradientExchangeResult& exchange, std::size_t shard,
                                 std::size_t shard_len);

/// Splits full-length vectors into the (sender, shard) grid expected by reduce_scatter_lossy.
GradientGrid split_into_grid(std::span<const ParamVector> full_vectors, const ShardLayout& layout);

}  // namespace lossync
