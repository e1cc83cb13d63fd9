// SPDX-License-Identifier: Apache-2.0

#include "lossync/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <fmt/core.h>

namespace lossync {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (workers < 2) throw Error(fmt::format("config.workers: need at least 2 workers, got {}", workers));
    if (shard_count() != workers) {
        throw Error(fmt::format("config.shards: each worker owns exactly one shard, so shards must equal workers "
                                "({} != {})",
                                shard_count(), workers));
    }
    try {
        model.validate();
    } catch (const Error& e) {
        throw Error(fmt::format("config.model: {}", e.what()));
    }
    if (model.dim() < workers) {
        throw Error(fmt::format("config.model: parameter dim {} is smaller than workers {}", model.dim(), workers));
    }
    if (dataset.samples < 2) throw Error("config.dataset.samples: need at least 2 samples");
    if (!(dataset.noise >= 0.0) || !std::isfinite(dataset.noise)) {
        throw Error(fmt::format("config.dataset.noise: must be finite and >= 0, got {}", dataset.noise));
    }
    if (iterations == 0) throw Error("config.iterations: must be >= 1");
    if (micro_batches == 0) throw Error("config.micro_batches: must be >= 1");
    if (batch_size == 0) throw Error("config.batch_size: must be >= 1");
    const std::size_t train_rows = std::max<std::size_t>(1, dataset.samples * 4 / 5);
    if (workers * micro_batches * batch_size > train_rows) {
        throw Error(fmt::format("config.batch_size: workers*micro_batches*batch_size = {} exceeds {} training rows",
                                workers * micro_batches * batch_size, train_rows));
    }
    try {
        learning_rate.validate();
    } catch (const Error& e) {
        throw Error(fmt::format("config.learning_rate: {}", e.what()));
    }
    if (!(p_grad >= 0.0 && p_grad <= 1.0)) throw Error(fmt::format("config.p_grad: must lie in [0, 1], got {}", p_grad));
    if (!(p_param >= 0.0 && p_param <= 1.0)) {
        throw Error(fmt::format("config.p_param: must lie in [0, 1], got {}", p_param));
    }
    for (double p : p_list) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(fmt::format("config.p_list: entry {} outside [0, 1]", p));
    }
    if (sigma2_window == 0) throw Error("config.sigma2_window: must be >= 1");
    if (output_dir.empty()) throw Error("config.output_dir: must not be empty");
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    if (!obj.is_object()) throw Error(fmt::format("config{}: expected an object", where));
    for (const auto& [key, _] : obj.items()) {
        if (!known.contains(key)) throw Error(fmt::format("config{}.{}: unknown key", where, key));
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(fmt::format("config{}.{}: {}", where, key, e.what()));
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
    reject_unknown(doc,
                   {"workers", "shards", "model", "dataset", "iterations", "micro_batches", "batch_size",
                    "learning_rate", "p_grad", "p_param", "p_list", "policy", "seed", "sigma2_window", "parallel",
                    "output_dir"},
                   "");
    ExperimentConfig cfg;
    read(doc, "workers", cfg.workers, "");
    read(doc, "shards", cfg.shards, "");
    read(doc, "iterations", cfg.iterations, "");
    read(doc, "micro_batches", cfg.micro_batches, "");
    read(doc, "batch_size", cfg.batch_size, "");
    read(doc, "p_grad", cfg.p_grad, "");
    read(doc, "p_param", cfg.p_param, "");
    read(doc, "p_list", cfg.p_list, "");
    read(doc, "seed", cfg.seed, "");
    read(doc, "sigma2_window", cfg.sigma2_window, "");
    read(doc, "parallel", cfg.parallel, "");
    read(doc, "output_dir", cfg.output_dir, "");

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        reject_unknown(m, {"kind", "features", "hidden"}, ".model");
        std::string kind{to_string(cfg.model.kind)};
        read(m, "kind", kind, ".model");
        try {
            cfg.model.kind = parse_model_kind(kind);
        } catch (const Error& e) {
            throw Error(fmt::format("config.model.kind: {}", e.what()));
        }
        read(m, "features", cfg.model.features, ".model");
        read(m, "hidden", cfg.model.hidden, ".model");
    }
    if (doc.contains("dataset")) {
        const json& d = doc.at("dataset");
        reject_unknown(d, {"samples", "noise"}, ".dataset");
        read(d, "samples", cfg.dataset.samples, ".dataset");
        read(d, "noise", cfg.dataset.noise, ".dataset");
    }
    if (doc.contains("learning_rate")) {
        const json& lr = doc.at("learning_rate");
        if (lr.is_number()) {
            cfg.learning_rate.base = lr.get<double>();
        } else {
            reject_unknown(lr, {"base", "decay"}, ".learning_rate");
            read(lr, "base", cfg.learning_rate.base, ".learning_rate");
            read(lr, "decay", cfg.learning_rate.decay, ".learning_rate");
        }
    }
    if (doc.contains("policy")) {
        const json& p = doc.at("policy");
        reject_unknown(p, {"variant", "fallback"}, ".policy");
        std::string variant{to_string(cfg.policy.variant)};
        std::string fallback{to_string(cfg.policy.fallback)};
        read(p, "variant", variant, ".policy");
        read(p, "fallback", fallback, ".policy");
        try {
            cfg.policy.variant = parse_variant(variant);
            cfg.policy.fallback = parse_fallback(fallback);
        } catch (const Error& e) {
            throw Error(fmt::format("config.policy: {}", e.what()));
        }
    }
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    return json{
        {"workers", cfg.workers},
        {"shards", cfg.shard_count()},
        {"model",
         {{"kind", std::string(to_string(cfg.model.kind))},
          {"features", cfg.model.features},
          {"hidden", cfg.model.hidden}}},
        {"dataset", {{"samples", cfg.dataset.samples}, {"noise", cfg.dataset.noise}}},
        {"iterations", cfg.iterations},
        {"micro_batches", cfg.micro_batches},
        {"batch_size", cfg.batch_size},
        {"learning_rate", {{"base", cfg.learning_rate.base}, {"decay", cfg.learning_rate.decay}}},
        {"p_grad", cfg.p_grad},
        {"p_param", cfg.p_param},
        {"p_list", cfg.p_list},
        {"policy",
         {{"variant", std::string(to_string(cfg.policy.variant))},
          {"fallback", std::string(to_string(cfg.policy.fallback))}}},
        {"seed", cfg.seed},
        {"sigma2_window", cfg.sigma2_window},
        {"parallel", cfg.parallel},
        {"output_dir", cfg.output_dir},
    };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open config file '{}'", path.string()));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(fmt::format("config file '{}': {}", path.string(), e.what()));
    }
    return config_from_json(doc);
}

SeedLineage seed_lineage(std::uint64_t seed) {
    return SeedLineage{derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3), derive_seed(seed, 4),
                       derive_seed(seed, 5)};
}

}  // namespace lossync
