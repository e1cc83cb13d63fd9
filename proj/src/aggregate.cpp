// SPDX-License-Identifier: Apache-2.0

#include "lossync/aggregate.hpp"

#include <functional>

#include <fmt/core.h>

namespace lossync {

std::string_view to_string(AggregationVariant v) {
    switch (v) {
        case AggregationVariant::OmitRenormalize: return "omit_renormalize";
        case AggregationVariant::StaleSubstitute: return "stale_substitute";
    }
    return "?";
}

std::string_view to_string(ZeroSurvivorFallback f) {
    switch (f) {
        case ZeroSurvivorFallback::ReusePrevAggregate: return "reuse_prev";
        case ZeroSurvivorFallback::ZeroGradient: return "zero";
        case ZeroSurvivorFallback::SkipUpdate: return "skip";
    }
    return "?";
}

AggregationVariant parse_variant(std::string_view name) {
    if (name == "omit_renormalize") return AggregationVariant::OmitRenormalize;
    if (name == "stale_substitute") return AggregationVariant::StaleSubstitute;
    throw Error(fmt::format("unknown aggregation policy '{}' (expected omit_renormalize or stale_substitute)", name));
}

ZeroSurvivorFallback parse_fallback(std::string_view name) {
    if (name == "reuse_prev") return ZeroSurvivorFallback::ReusePrevAggregate;
    if (name == "zero") return ZeroSurvivorFallback::ZeroGradient;
    if (name == "skip") return ZeroSurvivorFallback::SkipUpdate;
    throw Error(fmt::format("unknown zero-survivor fallback '{}' (expected reuse_prev, zero or skip)", name));
}

StaleCache make_stale_cache(std::size_t senders, std::size_t shard_len) {
    return StaleCache(senders, std::vector<double>(shard_len, 0.0));
}

AggregateResult zero_survivor_fallback(ZeroSurvivorFallback fallback,
                                       const std::optional<std::vector<double>>& prev_aggregate,
                                       std::size_t shard_len) {
    AggregateResult out;
    out.used_fallback = true;
    switch (fallback) {
        case ZeroSurvivorFallback::ReusePrevAggregate:
            if (!prev_aggregate) {
                throw Error("zero_survivor_fallback: reuse_prev requested but no previous aggregate exists");
            }
            if (prev_aggregate->size() != shard_len) {
                throw Error(fmt::format("zero_survivor_fallback: previous aggregate has length {}, expected {}",
                                        prev_aggregate->size(), shard_len));
            }
            out.gradient = *prev_aggregate;
            break;
        case ZeroSurvivorFallback::ZeroGradient:
            out.gradient.assign(shard_len, 0.0);
            break;
        case ZeroSurvivorFallback::SkipUpdate:
            out.skip_update = true;
            break;
    }
    return out;
}

namespace {

// Ascending-sender accumulation of the delivered pieces; `piece(i)` yields
// nullptr for a dropped sender.
template <typename PieceAt>
std::size_t accumulate_delivered(std::size_t senders, std::size_t shard_len, PieceAt piece,
                                 std::vector<double>& sum) {
    sum.assign(shard_len, 0.0);
    std::size_t fresh = 0;
    for (std::size_t i = 0; i < senders; ++i) {
        const std::vector<double>* g = piece(i);
        if (g == nullptr) continue;
        if (g->size() != shard_len) {
            throw Error(fmt::format("aggregate: piece from sender {} has length {}, expected {}", i, g->size(),
                                    shard_len));
        }
        for (std::size_t k = 0; k < shard_len; ++k) sum[k] += (*g)[k];
        ++fresh;
    }
    return fresh;
}

void divide(std::vector<double>& v, std::size_t count) {
    const double c = static_cast<double>(count);
    for (double& x : v) x /= c;
}

const std::vector<double>* slot_values(const ReceivedSlots& slots, std::size_t i) {
    return slots[i] ? &slots[i]->values : nullptr;
}

AggregateResult stale_substitute_impl(std::size_t senders, std::size_t shard_len, StaleCache& cache,
                                      bool divide_by_fresh,
                                      const std::function<const std::vector<double>*(std::size_t)>& piece,
                                      ZeroSurvivorFallback fallback,
                                      const std::optional<std::vector<double>>& prev_aggregate) {
    if (cache.size() != senders) {
        throw Error(fmt::format("aggregate_stale_substitute: cache has {} senders, expected {}", cache.size(),
                                senders));
    }
    for (std::size_t i = 0; i < senders; ++i) {
        if (cache[i].size() != shard_len) {
            throw Error(fmt::format("aggregate_stale_substitute: cache entry {} has length {}, expected {}", i,
                                    cache[i].size(), shard_len));
        }
    }
    std::size_t fresh = 0;
    for (std::size_t i = 0; i < senders; ++i) {
        const std::vector<double>* g = piece(i);
        if (g == nullptr) continue;
        if (g->size() != shard_len) {
            throw Error(fmt::format("aggregate_stale_substitute: piece from sender {} has length {}, expected {}", i,
                                    g->size(), shard_len));
        }
        cache[i] = *g;
        ++fresh;
    }
    if (divide_by_fresh && fresh == 0) {
        return zero_survivor_fallback(fallback, prev_aggregate, shard_len);
    }
    AggregateResult out;
    out.fresh = fresh;
    out.gradient.assign(shard_len, 0.0);
    for (std::size_t i = 0; i < senders; ++i) {
        for (std::size_t k = 0; k < shard_len; ++k) out.gradient[k] += cache[i][k];
    }
    divide(out.gradient, divide_by_fresh ? fresh : senders);
    return out;
}

}  // namespace

AggregateResult aggregate_omit_renormalize(const ReceivedSlots& slots, std::size_t shard_len,
                                           ZeroSurvivorFallback fallback,
                                           const std::optional<std::vector<double>>& prev_aggregate) {
    AggregateResult out;
    out.fresh = accumulate_delivered(
        slots.size(), shard_len, [&](std::size_t i) { return slot_values(slots, i); }, out.gradient);
    if (out.fresh == 0) return zero_survivor_fallback(fallback, prev_aggregate, shard_len);
    divide(out.gradient, out.fresh);
    return out;
}

AggregateResult aggregate_omit_renormalize(const std::vector<std::vector<double>>& pieces,
                                           const std::vector<bool>& mask, ZeroSurvivorFallback fallback,
                                           const std::optional<std::vector<double>>& prev_aggregate) {
    if (pieces.size() != mask.size()) {
        throw Error(fmt::format("aggregate_omit_renormalize: {} pieces but mask row has {} entries", pieces.size(),
                                mask.size()));
    }
    if (pieces.empty()) throw Error("aggregate_omit_renormalize: no senders");
    const std::size_t shard_len = pieces.front().size();
    AggregateResult out;
    out.fresh = accumulate_delivered(
        pieces.size(), shard_len, [&](std::size_t i) { return mask[i] ? &pieces[i] : nullptr; }, out.gradient);
    if (out.fresh == 0) return zero_survivor_fallback(fallback, prev_aggregate, shard_len);
    divide(out.gradient, out.fresh);
    return out;
}

AggregateResult aggregate_stale_substitute(const ReceivedSlots& slots, std::size_t shard_len, StaleCache& cache,
                                           bool divide_by_fresh, ZeroSurvivorFallback fallback,
                                           const std::optional<std::vector<double>>& prev_aggregate) {
    return stale_substitute_impl(
        slots.size(), shard_len, cache, divide_by_fresh, [&](std::size_t i) { return slot_values(slots, i); },
        fallback, prev_aggregate);
}

AggregateResult aggregate_stale_substitute(const std::vector<std::vector<double>>& pieces,
                                           const std::vector<bool>& mask, StaleCache& cache, bool divide_by_fresh) {
    if (pieces.size() != mask.size()) {
        throw Error(fmt::format("aggregate_stale_substitute: {} pieces but mask row has {} entries", pieces.size(),
                                mask.size()));
    }
    if (pieces.empty()) throw Error("aggregate_stale_substitute: no senders");
    return stale_substitute_impl(
        pieces.size(), pieces.front().size(), cache, divide_by_fresh,
        [&](std::size_t i) { return mask[i] ? &pieces[i] : nullptr; }, ZeroSurvivorFallback::ZeroGradient,
        std::nullopt);
}

AggregateResult aggregate(const AggregationPolicy& policy, const ReceivedSlots& slots, std::size_t shard_len,
                          StaleCache& cache, const std::optional<std::vector<double>>& prev_aggregate) {
    if (policy.variant == AggregationVariant::StaleSubstitute) {
        return aggregate_stale_substitute(slots, shard_len, cache, policy.stale_divide_by_fresh, policy.fallback,
                                          prev_aggregate);
    }
    return aggregate_omit_renormalize(slots, shard_len, policy.fallback, prev_aggregate);
}

}  // namespace lossync
