// SPDX-License-Identifier: Apache-2.0

#include "lossync/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "lossync/netsim.hpp"

namespace lossync {

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::LeastSquares: return "least_squares";
        case ModelKind::LogisticRegression: return "logistic";
        case ModelKind::Mlp: return "mlp";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "least_squares") return ModelKind::LeastSquares;
    if (name == "logistic") return ModelKind::LogisticRegression;
    if (name == "mlp") return ModelKind::Mlp;
    throw Error(fmt::format("unknown model kind '{}' (expected least_squares, logistic or mlp)", name));
}

std::size_t Model::dim() const {
    if (kind == ModelKind::Mlp) return hidden * (features + 2) + 1;
    return features;
}

void Model::validate() const {
    if (features == 0) throw Error("model: features must be positive");
    if (kind == ModelKind::Mlp && hidden == 0) throw Error("model: mlp needs a positive hidden width");
}

ParamVector Model::initial_params(std::uint64_t seed) const {
    validate();
    ParamVector p(dim(), 0.0);
    if (kind != ModelKind::Mlp) return p;
    std::mt19937_64 rng(derive_seed(seed, 0x1417));
    std::normal_distribution<double> in(0.0, 1.0 / std::sqrt(static_cast<double>(features)));
    std::normal_distribution<double> out(0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
    const std::size_t w_len = hidden * features;
    for (std::size_t k = 0; k < w_len; ++k) p[k] = in(rng);
    for (std::size_t k = 0; k < hidden; ++k) p[w_len + hidden + k] = out(rng);
    return p;
}

Batch Dataset::gather(std::span<const std::size_t> rows) const {
    Batch b;
    b.cols = features;
    b.x.reserve(rows.size() * features);
    b.y.reserve(rows.size());
    for (std::size_t r : rows) {
        if (r >= samples()) throw Error(fmt::format("dataset: row {} out of range ({} samples)", r, samples()));
        b.x.insert(b.x.end(), x.begin() + static_cast<std::ptrdiff_t>(r * features),
                   x.begin() + static_cast<std::ptrdiff_t>((r + 1) * features));
        b.y.push_back(y[r]);
    }
    return b;
}

Dataset make_synthetic_dataset(std::uint64_t seed, ModelKind kind, std::size_t n, std::size_t f, double noise) {
    if (n < 2) throw Error(fmt::format("make_synthetic_dataset: need at least 2 samples, got {}", n));
    if (f < 1) throw Error("make_synthetic_dataset: need at least 1 feature");
    if (!(noise >= 0.0) || !std::isfinite(noise)) {
        throw Error(fmt::format("make_synthetic_dataset: noise must be finite and >= 0, got {}", noise));
    }
    std::mt19937_64 rng(derive_seed(seed, 0xda7a));
    std::normal_distribution<double> normal(0.0, 1.0);

    Dataset d;
    d.features = f;
    d.planted.resize(f);
    // Scaled so that x.w* has roughly unit variance.
    const double scale = 1.0 / std::sqrt(static_cast<double>(f));
    for (double& w : d.planted) w = normal(rng) * scale;

    d.x.resize(n * f);
    d.y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        double dot = 0.0;
        for (std::size_t k = 0; k < f; ++k) {
            const double v = normal(rng);
            d.x[r * f + k] = v;
            dot += v * d.planted[k];
        }
        const double eps = normal(rng);
        if (kind == ModelKind::LogisticRegression) {
            d.y[r] = (dot + noise * eps > 0.0) ? 1.0 : 0.0;
        } else {
            d.y[r] = dot + noise * eps;
        }
    }

    const std::size_t n_train = std::max<std::size_t>(1, (n * 4) / 5);
    d.train.resize(n_train);
    std::iota(d.train.begin(), d.train.end(), std::size_t{0});
    d.validation.resize(n - n_train);
    std::iota(d.validation.begin(), d.validation.end(), n_train);
    return d;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double softplus(double s) {
    return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

// Loss of one sample; accumulates its gradient into `grad` when non-null.
double sample_loss(const Model& m, std::span<const double> p, std::span<const double> x, double y, double* grad) {
    switch (m.kind) {
        case ModelKind::LeastSquares: {
            const double r = dot(p, x) - y;
            if (grad) {
                for (std::size_t k = 0; k < x.size(); ++k) grad[k] += r * x[k];
            }
            return 0.5 * r * r;
        }
        case ModelKind::LogisticRegression: {
            const double s = dot(p, x);
            if (grad) {
                const double e = sigmoid(s) - y;
                for (std::size_t k = 0; k < x.size(); ++k) grad[k] += e * x[k];
            }
            return softplus(s) - y * s;
        }
        case ModelKind::Mlp: {
            const std::size_t h = m.hidden;
            const std::size_t f = m.features;
            const double* W = p.data();
            const double* b = W + h * f;
            const double* v = b + h;
            const double c = v[h];
            std::vector<double> z(h);
            double out = c;
            for (std::size_t u = 0; u < h; ++u) {
                double a = b[u];
                for (std::size_t k = 0; k < f; ++k) a += W[u * f + k] * x[k];
                z[u] = std::tanh(a);
                out += v[u] * z[u];
            }
            const double r = out - y;
            if (grad) {
                double* gW = grad;
                double* gb = gW + h * f;
                double* gv = gb + h;
                for (std::size_t u = 0; u < h; ++u) {
                    const double da = r * v[u] * (1.0 - z[u] * z[u]);
                    for (std::size_t k = 0; k < f; ++k) gW[u * f + k] += da * x[k];
                    gb[u] += da;
                    gv[u] += r * z[u];
                }
                gv[h] += r;
            }
            return 0.5 * r * r;
        }
    }
    return 0.0;
}

void check_params(const Model& model, std::span<const double> params, std::size_t cols) {
    if (params.size() != model.dim()) {
        throw Error(fmt::format("model: {} parameters supplied, {} model has dim {}", params.size(),
                                to_string(model.kind), model.dim()));
    }
    if (cols != model.features) {
        throw Error(fmt::format("model: batch has {} features, model expects {}", cols, model.features));
    }
}

}  // namespace

LossGrad loss_and_grad(const Model& model, std::span<const double> params, const Batch& batch) {
    check_params(model, params, batch.cols);
    if (batch.rows() == 0) throw Error("loss_and_grad: empty batch");
    LossGrad out;
    out.grad.assign(model.dim(), 0.0);
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        out.loss += sample_loss(model, params, batch.row(r), batch.y[r], out.grad.data());
    }
    const double n = static_cast<double>(batch.rows());
    out.loss /= n;
    for (double& g : out.grad) g /= n;
    if (!std::isfinite(out.loss) || !all_finite(out.grad)) {
        throw Error(fmt::format("loss_and_grad: non-finite loss or gradient for {} model", to_string(model.kind)));
    }
    return out;
}

double evaluate_loss(const Model& model, std::span<const double> params, const Dataset& data,
                     std::span<const std::size_t> rows) {
    check_params(model, params, data.features);
    if (rows.empty()) throw Error("evaluate_loss: no rows");
    double total = 0.0;
    for (std::size_t r : rows) {
        const std::span<const double> x(data.x.data() + r * data.features, data.features);
        total += sample_loss(model, params, x, data.y[r], nullptr);
    }
    const double loss = total / static_cast<double>(rows.size());
    if (!std::isfinite(loss)) throw Error("evaluate_loss: non-finite loss");
    return loss;
}

BatchSampler::BatchSampler(const Dataset& data, std::size_t workers, std::size_t micro_batches,
                           std::size_t batch_size, std::uint64_t seed)
    : mData(&data), mWorkers(workers), mMicroBatches(micro_batches), mBatchSize(batch_size), mSeed(seed) {
    if (workers == 0 || micro_batches == 0 || batch_size == 0) {
        throw Error("BatchSampler: workers, micro_batches and batch_size must be positive");
    }
    const std::size_t per_iteration = workers * micro_batches * batch_size;
    if (per_iteration > data.train.size()) {
        throw Error(fmt::format("BatchSampler: one iteration needs {} rows ({} workers x {} micro x {} batch) but "
                                "the training split has {}",
                                per_iteration, workers, micro_batches, batch_size, data.train.size()));
    }
    mIterationsPerEpoch = data.train.size() / per_iteration;
}

const std::vector<std::size_t>& BatchSampler::permutation(std::uint64_t epoch) {
    if (epoch != mCachedEpoch) {
        mPermutation = mData->train;
        std::mt19937_64 rng(counter_hash(mSeed, {0xba7c4ULL, epoch}));
        std::shuffle(mPermutation.begin(), mPermutation.end(), rng);
        mCachedEpoch = epoch;
    }
    return mPermutation;
}

std::vector<std::size_t> BatchSampler::indices(std::size_t worker, std::uint64_t t, std::size_t micro) {
    if (worker >= mWorkers || micro >= mMicroBatches) {
        throw Error(fmt::format("BatchSampler: worker {} / micro-batch {} out of range", worker, micro));
    }
    const std::uint64_t epoch = t / mIterationsPerEpoch;
    const std::uint64_t slot = ((t % mIterationsPerEpoch) * mMicroBatches + micro) * mWorkers + worker;
    const auto& perm = permutation(epoch);
    const auto first = perm.begin() + static_cast<std::ptrdiff_t>(slot * mBatchSize);
    return {first, first + static_cast<std::ptrdiff_t>(mBatchSize)};
}

Batch BatchSampler::sample(std::size_t worker, std::uint64_t t, std::size_t micro) {
    const auto rows = indices(worker, t, micro);
    return mData->gather(rows);
}

Batch sample_batch(const Dataset& data, std::size_t worker, std::uint64_t t, std::size_t micro,
                   std::size_t batch_size, std::uint64_t seed, std::size_t workers, std::size_t micro_batches) {
    BatchSampler sampler(data, workers, micro_batches, batch_size, seed);
    return sampler.sample(worker, t, micro);
}

}  // namespace lossync
