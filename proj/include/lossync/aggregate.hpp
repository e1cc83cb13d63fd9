// SPDX-License-Identifier: Apache-2.0
//
// Per-shard gradient estimate built from whatever pieces arrived.
//
// Two drop-handling policies are supported:
//  - OmitRenormalize: average only the delivered pieces, sum(s*g)/sum(s).
//    Unbiased whenever at least one piece survives.
//  - StaleSubstitute: a dropped sender contributes its last delivered piece
//    from a per-sender cache; the average is then taken over all N slots.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lossync/collectives.hpp"

namespace lossync {

enum class AggregationVariant { OmitRenormalize, StaleSubstitute };
enum class ZeroSurvivorFallback { ReusePrevAggregate, ZeroGradient, SkipUpdate };

struct AggregationPolicy {
    AggregationVariant variant = AggregationVariant::OmitRenormalize;
    ZeroSurvivorFallback fallback = ZeroSurvivorFallback::ReusePrevAggregate;
    // StaleSubstitute only: divide by the number of fresh pieces instead of N.
    // Alternative reading of the stale path, exercised by tests.
    bool stale_divide_by_fresh = false;
};

// Names used in config files and on the command line.
std::string_view to_string(AggregationVariant v);
std::string_view to_string(ZeroSurvivorFallback f);
AggregationVariant parse_variant(std::string_view name);
ZeroSurvivorFallback parse_fallback(std::string_view name);

struct AggregateResult {
    std::vector<double> gradient;  // empty when skip_update is set
    bool skip_update = false;
    bool used_fallback = false;
    std::size_t fresh = 0;  // number of pieces delivered this iteration
};

/// Previous piece per sender, zeros before the first delivery.
using StaleCache = std::vector<std::vector<double>>;

StaleCache make_stale_cache(std::size_t senders, std::size_t shard_len);

/// Applied when no piece survived. ReusePrevAggregate with no history throws.
AggregateResult zero_survivor_fallback(ZeroSurvivorFallback fallback,
                                       const std::optional<std::vector<double>>& prev_aggregate,
                                       std::size_t shard_len);

AggregateResult aggregate_omit_renormalize(const ReceivedSlots& slots, std::size_t shard_len,
                                           ZeroSurvivorFallback fallback = ZeroSurvivorFallback::ReusePrevAggregate,
                                           const std::optional<std::vector<double>>& prev_aggregate = std::nullopt);

/// Same, with every sender's piece supplied and a separate mask row.
/// Masked-out pieces are never read.
AggregateResult aggregate_omit_renormalize(const std::vector<std::vector<double>>& pieces,
                                           const std::vector<bool>& mask,
                                           ZeroSurvivorFallback fallback = ZeroSurvivorFallback::ReusePrevAggregate,
                                           const std::optional<std::vector<double>>& prev_aggregate = std::nullopt);

/// Updates `cache` with every delivered piece.
AggregateResult aggregate_stale_substitute(const ReceivedSlots& slots, std::size_t shard_len, StaleCache& cache,
                                           bool divide_by_fresh = false,
                                           ZeroSurvivorFallback fallback = ZeroSurvivorFallback::ReusePrevAggregate,
                                           const std::optional<std::vector<double>>& prev_aggregate = std::nullopt);

AggregateResult aggregate_stale_substitute(const std::vector<std::vector<double>>& pieces,
                                           const std::vector<bool>& mask, StaleCache& cache,
                                           bool divide_by_fresh = false);

/// Dispatches on policy.variant.
AggregateResult aggregate(const AggregationPolicy& policy, const ReceivedSlots& slots, std::size_t shard_len,
                          StaleCache& cache, const std::optional<std::vector<double>>& prev_aggregate);

}  // namespace lossync
