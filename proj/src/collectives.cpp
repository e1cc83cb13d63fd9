// SPDX-License-Identifier: Apache-2.0

#include "lossync/collectives.hpp"

#include <algorithm>

#include <fmt/core.h>

namespace lossync {

std::size_t GradientExchangeResult::received_count(std::size_t shard) const {
    std::size_t n = 0;
    for (const auto& slot : received.at(shard)) n += slot.has_value() ? 1 : 0;
    return n;
}

namespace {

void check_grid(const GradientGrid& grid, const ShardLayout& layout) {
    const std::size_t n = layout.num_shards();
    if (grid.size() != n) {
        throw Error(fmt::format("reduce_scatter_lossy: grid has {} senders, layout has {} shards", grid.size(), n));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (grid[i].size() != n) {
            throw Error(fmt::format("reduce_scatter_lossy: sender {} supplied {} pieces, expected {}", i,
                                    grid[i].size(), n));
        }
        for (std::size_t j = 0; j < n; ++j) {
            const GradientPiece& piece = grid[i][j];
            if (piece.shard != j || piece.owner != i) {
                throw Error(fmt::format("reduce_scatter_lossy: grid[{}][{}] is labelled (owner {}, shard {})", i, j,
                                        piece.owner, piece.shard));
            }
            if (piece.values.size() != layout.shard_size(j)) {
                throw Error(fmt::format("reduce_scatter_lossy: piece ({}, {}) has length {}, shard length is {}", i,
                                        j, piece.values.size(), layout.shard_size(j)));
            }
        }
    }
}

}  // namespace

GradientExchangeResult reduce_scatter_lossy(const GradientGrid& grid, const ShardLayout& layout,
                                            const DropConfig& cfg, std::uint64_t t) {
    check_grid(grid, layout);
    const std::size_t n = layout.num_shards();
    GradientExchangeResult out;
    out.mask = ReceptionMask(Phase::Gradient, t, n, n);
    out.received.assign(n, ReceivedSlots(n));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            auto delivered = transmit(grid[i][j], cfg, Phase::Gradient, t, i, j, j);
            out.mask.set(i, j, delivered.has_value());
            out.received[j][i] = std::move(delivered);
        }
    }
    return out;
}

AllGatherResult all_gather_lossy(std::span<const ParamVector> owner_shards, std::span<const ParamVector> prev_views,
                                 const ShardLayout& layout, const DropConfig& cfg, std::uint64_t t) {
    const std::size_t n = layout.num_shards();
    if (owner_shards.size() != n || prev_views.size() != n) {
        throw Error(fmt::format("all_gather_lossy: expected {} owner shards and views, got {} and {}", n,
                                owner_shards.size(), prev_views.size()));
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (owner_shards[j].size() != layout.shard_size(j)) {
            throw Error(fmt::format("all_gather_lossy: owner shard {} has length {}, layout expects {}", j,
                                    owner_shards[j].size(), layout.shard_size(j)));
        }
        if (prev_views[j].size() != layout.total_dim()) {
            throw Error(fmt::format("all_gather_lossy: view {} has length {}, layout expects {}", j,
                                    prev_views[j].size(), layout.total_dim()));
        }
    }

    AllGatherResult out;
    out.views.assign(prev_views.begin(), prev_views.end());
    out.update.mask = ReceptionMask(Phase::Parameter, t, n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const ParamShardMsg msg{j, j, owner_shards[j]};
        for (std::size_t i = 0; i < n; ++i) {
            // The owner's copy is local memory and never travels.
            const auto delivered =
                i == j ? std::optional<ParamShardMsg>(msg) : transmit(msg, cfg, Phase::Parameter, t, j, i, j);
            out.update.mask.set(i, j, delivered.has_value());
            if (delivered) {
                const auto dst = layout.slice(std::span<double>(out.views[i]), j);
                std::copy(delivered->values.begin(), delivered->values.end(), dst.begin());
            }
        }
    }
    return out;
}

ParamVector all_reduce_reference(std::span<const ParamVector> vectors) {
    if (vectors.empty()) throw Error("all_reduce_reference: no inputs");
    const std::size_t len = vectors.front().size();
    ParamVector out(len, 0.0);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].size() != len) {
            throw Error(fmt::format("all_reduce_reference: input {} has length {}, expected {}", i,
                                    vectors[i].size(), len));
        }
        for (std::size_t k = 0; k < len; ++k) out[k] += vectors[i][k];
    }
    return out;
}

std::vector<double> sum_received(const GradientExchangeResult& exchange, std::size_t shard, std::size_t shard_len) {
    std::vector<double> out(shard_len, 0.0);
    for (const auto& slot : exchange.received.at(shard)) {
        if (!slot) continue;
        if (slot->values.size() != shard_len) {
            throw Error(fmt::format("sum_received: piece from {} has length {}, expected {}", slot->owner,
                                    slot->values.size(), shard_len));
        }
        for (std::size_t k = 0; k < shard_len; ++k) out[k] += slot->values[k];
    }
    return out;
}

GradientGrid split_into_grid(std::span<const ParamVector> full_vectors, const ShardLayout& layout) {
    const std::size_t n = layout.num_shards();
    if (full_vectors.size() != n) {
        throw Error(fmt::format("split_into_grid: {} vectors for {} shards", full_vectors.size(), n));
    }
    GradientGrid grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid[i].reserve(n);
        for (std::size_t j = 0; j < n; ++j) {
            const auto part = layout.slice(std::span<const double>(full_vectors[i]), j);
            grid[i].push_back(GradientPiece{j, i, {part.begin(), part.end()}});
        }
    }
    return grid;
}

}  // namespace lossync
