// SPDX-License-Identifier: Apache-2.0

#include "lossync/core.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace lossync {

ShardLayout shard_partition(std::size_t d, std::size_t n) {
    if (d == 0 || n == 0) {
        throw Error(fmt::format("shard_partition: d and N must be positive (d={}, N={})", d, n));
    }
    if (d < n) {
        throw Error(fmt::format("shard_partition: d={} < N={} leaves an empty shard", d, n));
    }
    ShardLayout layout;
    layout.mTotalDim = d;
    layout.mRanges.reserve(n);
    const std::size_t base = d / n;
    const std::size_t extra = d % n;
    std::size_t begin = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t len = base + (j < extra ? 1 : 0);
        layout.mRanges.push_back({begin, begin + len});
        begin += len;
    }
    return layout;
}

std::span<const double> ShardLayout::slice(std::span<const double> full, std::size_t shard) const {
    if (full.size() != mTotalDim) {
        throw Error(fmt::format("ShardLayout::slice: vector has {} entries, layout expects {}", full.size(), mTotalDim));
    }
    const auto& r = range(shard);
    return full.subspan(r.begin, r.size());
}

std::span<double> ShardLayout::slice(std::span<double> full, std::size_t shard) const {
    if (full.size() != mTotalDim) {
        throw Error(fmt::format("ShardLayout::slice: vector has {} entries, layout expects {}", full.size(), mTotalDim));
    }
    const auto& r = range(shard);
    return full.subspan(r.begin, r.size());
}

const char* to_string(Phase phase) {
    return phase == Phase::Gradient ? "gradient" : "parameter";
}

ReceptionMask::ReceptionMask(Phase phase, std::uint64_t iteration, std::size_t workers, std::size_t shards)
    : mPhase(phase), mIteration(iteration), mWorkers(workers), mShards(shards), mEntries(workers * shards, 0) {}

bool ReceptionMask::at(std::size_t worker, std::size_t shard) const {
    if (worker >= mWorkers || shard >= mShards) {
        throw Error(fmt::format("ReceptionMask: index ({}, {}) out of range", worker, shard));
    }
    return mEntries[worker * mShards + shard] != 0;
}

void ReceptionMask::set(std::size_t worker, std::size_t shard, bool delivered) {
    if (worker >= mWorkers || shard >= mShards) {
        throw Error(fmt::format("ReceptionMask: index ({}, {}) out of range", worker, shard));
    }
    mEntries[worker * mShards + shard] = delivered ? 1 : 0;
}

std::vector<bool> ReceptionMask::column(std::size_t shard) const {
    std::vector<bool> out(mWorkers);
    for (std::size_t i = 0; i < mWorkers; ++i) out[i] = at(i, shard);
    return out;
}

std::size_t ReceptionMask::delivered_count(std::size_t shard) const {
    std::size_t count = 0;
    for (std::size_t i = 0; i < mWorkers; ++i) count += at(i, shard) ? 1 : 0;
    return count;
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace lossync
