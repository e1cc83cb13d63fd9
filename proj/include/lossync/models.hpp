// SPDX-License-Identifier: Apache-2.0
//
// Toy differentiable objectives with exact gradients, planted synthetic data,
// and per-worker mini-batch sampling.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lossync/core.hpp"

namespace lossync {

enum class ModelKind { LeastSquares, LogisticRegression, Mlp };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Parameter layouts:
///   LeastSquares, LogisticRegression: w[features]
///   Mlp: W[hidden x features] (row-major), b[hidden], v[hidden], c
struct Model {
    ModelKind kind = ModelKind::LeastSquares;
    std::size_t features = 1;
    std::size_t hidden = 0;  // Mlp only

    std::size_t dim() const;
    void validate() const;
    /// Zeros for the linear models; small seeded Gaussian weights for the MLP.
    ParamVector initial_params(std::uint64_t seed) const;
};

/// Row-major feature block with its targets.
struct Batch {
    std::size_t cols = 0;
    std::vector<double> x;
    std::vector<double> y;

    std::size_t rows() const { return y.size(); }
    std::span<const double> row(std::size_t r) const { return {x.data() + r * cols, cols}; }
};

struct Dataset {
    std::size_t features = 0;
    std::vector<double> x;  // samples x features, row-major
    std::vector<double> y;  // real targets, or {0,1} labels
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    ParamVector planted;  // generating weights

    std::size_t samples() const { return y.size(); }
    Batch gather(std::span<const std::size_t> rows) const;
};

/// Deterministic in `seed`. Regression data for LeastSquares and Mlp
/// (y = x.w* + noise*eps), thresholded labels for LogisticRegression
/// (y = [x.w* + noise*eps > 0]). First 80% of samples train, rest validation.
Dataset make_synthetic_dataset(std::uint64_t seed, ModelKind kind, std::size_t n, std::size_t f, double noise);

struct LossGrad {
    double loss = 0.0;
    ParamVector grad;
};

/// Mean-over-batch loss and its exact gradient. Throws on non-finite values.
LossGrad loss_and_grad(const Model& model, std::span<const double> params, const Batch& batch);

/// Mean loss over the given dataset rows, without materializing a batch.
double evaluate_loss(const Model& model, std::span<const double> params, const Dataset& data,
                     std::span<const std::size_t> rows);

/// Partitioned shuffle of the training rows.
///
/// Each epoch is a seeded permutation of the training set cut into
/// consecutive blocks of `batch_size`. Iteration t, micro-batch m, worker i
/// takes block ((t mod E)*M + m)*W + i of epoch t / E, where E is the number of
/// whole iterations an epoch can feed. Blocks within one iteration never overlap.
class BatchSampler {
public:
    BatchSampler(const Dataset& data, std::size_t workers, std::size_t micro_batches, std::size_t batch_size,
                 std::uint64_t seed);

    std::vector<std::size_t> indices(std::size_t worker, std::uint64_t t, std::size_t micro);
    Batch sample(std::size_t worker, std::uint64_t t, std::size_t micro);

    std::size_t iterations_per_epoch() const { return mIterationsPerEpoch; }

private:
    const std::vector<std::size_t>& permutation(std::uint64_t epoch);

    const Dataset* mData;
    std::size_t mWorkers;
    std::size_t mMicroBatches;
    std::size_t mBatchSize;
    std::uint64_t mSeed;
    std::size_t mIterationsPerEpoch = 0;
    std::uint64_t mCachedEpoch = ~std::uint64_t{0};
    std::vector<std::size_t> mPermutation;
};

Batch sample_batch(const Dataset& data, std::size_t worker, std::uint64_t t, std::size_t micro,
                   std::size_t batch_size, std::uint64_t seed, std::size_t workers, std::size_t micro_batches);

}  // namespace lossync
