// SPDX-License-Identifier: Apache-2.0

#include "lossync/netsim.hpp"

namespace lossync {

void DropConfig::validate() const {
    if (!(p_grad >= 0.0 && p_grad <= 1.0)) {
        throw Error(fmt::format("p_grad must lie in [0, 1], got {}", p_grad));
    }
    if (!(p_param >= 0.0 && p_param <= 1.0)) {
        throw Error(fmt::format("p_param must lie in [0, 1], got {}", p_param));
    }
}

std::uint64_t counter_hash(std::uint64_t key, std::initializer_list<std::uint64_t> counters) {
    std::uint64_t h = mix64(key);
    for (std::uint64_t c : counters) {
        h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return counter_hash(seed, {0x5eedULL, stream});
}

bool drop_decision(const DropConfig& cfg, Phase phase, std::uint64_t t, std::size_t src, std::size_t dst,
                   std::size_t shard) {
    if (src == dst && cfg.always_deliver_self) return true;
    const double p = cfg.rate(phase);
    if (p <= 0.0) return true;
    if (p >= 1.0) return false;
    const std::uint64_t bits = counter_hash(cfg.seed, {static_cast<std::uint64_t>(phase), t, src, dst, shard});
    return to_unit(bits) >= p;
}

}  // namespace lossync
