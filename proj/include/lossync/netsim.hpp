// SPDX-License-Identifier: Apache-2.0
//
// Deterministic lossy channel. Every delivery decision is a pure function of
// (seed, phase, iteration, src, dst, shard), so decisions can be queried in
// any order, from any thread, and always agree.

#pragma once

#include <concepts>
#include <cstdint>
#include <initializer_list>
#include <optional>

#include <fmt/core.h>

#include "lossync/core.hpp"

namespace lossync {

struct DropConfig {
    double p_grad = 0.0;
    double p_param = 0.0;
    std::uint64_t seed = 0;
    // A worker's message to itself never goes on the wire. Disabling this is
    // only meaningful in tests that need to reach the zero-survivor path.
    bool always_deliver_self = true;

    double rate(Phase phase) const { return phase == Phase::Gradient ? p_grad : p_param; }
    void validate() const;
};

/// Stateless 64-bit mixer (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hash of a key and an arbitrary counter tuple; each word is folded through
/// the mixer so that permuted tuples hash differently.
std::uint64_t counter_hash(std::uint64_t key, std::initializer_list<std::uint64_t> counters);

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Independent sub-seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// SplitMix64 stream; output n is mix64(key + n * golden). Cheap to construct,
/// so one engine per Monte Carlo trial is fine.
class SplitMixEngine {
public:
    using result_type = std::uint64_t;

    explicit SplitMixEngine(std::uint64_t key) : mState(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() {
        const result_type out = mix64(mState);
        mState += 0x9e3779b97f4a7c15ULL;
        return out;
    }

    double uniform() { return to_unit((*this)()); }

private:
    std::uint64_t mState;
};

/// True when the message (phase, t, src, dst, shard) is delivered. A message is
/// dropped when its uniform draw falls below the phase's drop rate.
bool drop_decision(const DropConfig& cfg, Phase phase, std::uint64_t t, std::size_t src, std::size_t dst,
                   std::size_t shard);

template <typename Payload>
concept ShardPayload = requires(const Payload& p) {
    { p.shard } -> std::convertible_to<std::size_t>;
};

/// Passes `payload` through the channel. Returns std::nullopt when dropped.
template <ShardPayload Payload>
std::optional<Payload> transmit(const Payload& payload, const DropConfig& cfg, Phase phase, std::uint64_t t,
                                std::size_t src, std::size_t dst, std::size_t shard) {
    if (payload.shard != shard) {
        throw Error(fmt::format("transmit: payload carries shard {} but was sent as shard {}", payload.shard, shard));
    }
    if (!drop_decision(cfg, phase, t, src, dst, shard)) return std::nullopt;
    return payload;
}

}  // namespace lossync
