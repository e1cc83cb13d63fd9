// SPDX-License-Identifier: Apache-2.0
//
// Experiment manifest. Stored as JSON; every key is optional and unknown keys
// are rejected so that typos do not silently fall back to defaults.
//
//   {
//     "workers": 8, "shards": 8,
//     "model": {"kind": "logistic", "features": 16, "hidden": 0},
//     "dataset": {"samples": 4000, "noise": 0.5},
//     "iterations": 2000, "micro_batches": 1, "batch_size": 16,
//     "learning_rate": {"base": 0.1, "decay": 0.0},
//     "p_grad": 0.1, "p_param": 0.1, "p_list": [0, 0.1, 0.2],
//     "policy": {"variant": "omit_renormalize", "fallback": "reuse_prev"},
//     "seed": 1, "sigma2_window": 100, "parallel": false,
//     "output_dir": "out"
//   }

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lossync/aggregate.hpp"
#include "lossync/models.hpp"
#include "lossync/netsim.hpp"
#include "lossync/worker.hpp"

namespace lossync {

struct DatasetParams {
    std::size_t samples = 2000;
    double noise = 0.1;
};

struct ExperimentConfig {
    std::size_t workers = 4;
    std::size_t shards = 0;  // 0 means one per worker
    Model model{ModelKind::LeastSquares, 16, 0};
    DatasetParams dataset;
    std::size_t iterations = 200;
    std::size_t micro_batches = 1;
    std::size_t batch_size = 16;
    LearningRate learning_rate;
    double p_grad = 0.0;
    double p_param = 0.0;
    std::vector<double> p_list;  // sweep only
    AggregationPolicy policy;
    std::uint64_t seed = 1;
    std::size_t sigma2_window = 100;
    bool parallel = false;
    std::string output_dir = "out";

    std::size_t shard_count() const { return shards == 0 ? workers : shards; }

    /// Throws Error naming the offending field.
    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Seeds of the independent randomness streams of one run.
struct SeedLineage {
    std::uint64_t dataset;
    std::uint64_t drops;
    std::uint64_t batches;
    std::uint64_t init;
    std::uint64_t drift_pairs;
};

SeedLineage seed_lineage(std::uint64_t seed);

}  // namespace lossync
