// SPDX-License-Identifier: Apache-2.0
//
// Domain types shared by every lossync module, plus the sharding rule.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lossync {

using ParamVector = std::vector<double>;

/// Thrown for invalid arguments and malformed inputs anywhere in the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Half-open index range [begin, end) into the flat parameter vector.
struct ShardRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    friend bool operator==(const ShardRange&, const ShardRange&) = default;
};

/// Partition of a flat parameter vector of dimension d into N contiguous shards.
/// Shard j is owned by worker j.
class ShardLayout {
public:
    ShardLayout() = default;

    std::size_t total_dim() const { return mTotalDim; }
    std::size_t num_shards() const { return mRanges.size(); }
    const std::vector<ShardRange>& boundaries() const { return mRanges; }
    const ShardRange& range(std::size_t shard) const { return mRanges.at(shard); }
    std::size_t shard_size(std::size_t shard) const { return range(shard).size(); }

    std::span<const double> slice(std::span<const double> full, std::size_t shard) const;
    std::span<double> slice(std::span<double> full, std::size_t shard) const;

    friend bool operator==(const ShardLayout&, const ShardLayout&) = default;

private:
    friend ShardLayout shard_partition(std::size_t d, std::size_t n);

    std::size_t mTotalDim = 0;
    std::vector<ShardRange> mRanges;
};

/// Near-equal contiguous split: the first (d mod n) shards get ceil(d/n)
/// entries, the rest floor(d/n). Throws when d < n.
ShardLayout shard_partition(std::size_t d, std::size_t n);

/// One worker's gradient restricted to one shard, g_t^(i,j).
struct GradientPiece {
    std::size_t shard = 0;
    std::size_t owner = 0;  // worker that computed it
    std::vector<double> values;
};

/// A shard owner's freshly updated parameters, as sent in the all-gather phase.
struct ParamShardMsg {
    std::size_t shard = 0;
    std::size_t owner = 0;
    std::vector<double> values;
};

enum class Phase : std::uint8_t { Gradient = 0, Parameter = 1 };

const char* to_string(Phase phase);

/// Realized delivery indicators for one phase of one iteration.
///
/// With shard j owned by worker j, every message of a phase is identified by
/// the non-owner endpoint and the shard:
///   Gradient:  at(i, j) is s_t^(i,j), worker i's piece reaching owner j.
///   Parameter: at(i, j) is r_t^(j,i), owner j's broadcast reaching worker i.
/// Diagonal entries are self-deliveries.
class ReceptionMask {
public:
    ReceptionMask() = default;
    ReceptionMask(Phase phase, std::uint64_t iteration, std::size_t workers, std::size_t shards);

    Phase phase() const { return mPhase; }
    std::uint64_t iteration() const { return mIteration; }
    std::size_t workers() const { return mWorkers; }
    std::size_t shards() const { return mShards; }

    bool at(std::size_t worker, std::size_t shard) const;
    void set(std::size_t worker, std::size_t shard, bool delivered);

    /// Indicators for shard j indexed by worker.
    std::vector<bool> column(std::size_t shard) const;
    std::size_t delivered_count(std::size_t shard) const;

    friend bool operator==(const ReceptionMask&, const ReceptionMask&) = default;

private:
    Phase mPhase = Phase::Gradient;
    std::uint64_t mIteration = 0;
    std::size_t mWorkers = 0;
    std::size_t mShards = 0;
    std::vector<std::uint8_t> mEntries;
};

/// Per-shard drift bookkeeping for a live run.
struct DriftStats {
    /// samples[j][r] holds the mean pairwise squared discrepancy of shard j at record r.
    std::vector<std::vector<double>> samples;
    /// sigma2_hat[j] is the running estimate of E[dtheta^2] for shard j.
    std::vector<double> sigma2_hat;
    std::size_t window = 100;
};

bool all_finite(std::span<const double> values);

}  // namespace lossync
