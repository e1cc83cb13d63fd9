// SPDX-License-Identifier: Apache-2.0
//
// Inter-replica drift of a shard under lossy parameter broadcasts.
//
// Two replicas of a shard receive each broadcast independently with
// probability 1-p. The expected squared discrepancy E_t obeys
//
//     E_{t+1} = p^2 E_t + 2p(1-p) sigma^2
//
// whose fixed point is 2p/(1+p) sigma^2. This module provides the recurrence,
// its closed form, the steady state, a Monte Carlo simulation of the
// four-case replica process, and the estimators used on live training runs.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "lossync/core.hpp"
#include "lossync/netsim.hpp"

namespace lossync {

enum class DriftSource { Recurrence, ClosedForm, MonteCarlo, LiveTraining };

std::string_view to_string(DriftSource source);

/// values[t] is E_t for t = 0..T.
struct DriftTrajectory {
    DriftSource source = DriftSource::Recurrence;
    std::vector<double> values;

    /// Mean of values[from..].
    double tail_mean(std::size_t from) const;
};

double drift_recurrence_step(double e_t, double p, double sigma2);
double drift_closed_form(std::uint64_t t, double e0, double p, double sigma2);
double drift_steady_state(double p, double sigma2);

DriftTrajectory recurrence_trajectory(std::size_t iterations, double e0, double p, double sigma2);
DriftTrajectory closed_form_trajectory(std::size_t iterations, double e0, double p, double sigma2);

/// Draws the broadcast update dtheta_t with E[dtheta^2] = sigma2.
struct UpdateSampler {
    enum class Distribution { Gaussian, Rademacher };

    Distribution distribution = Distribution::Gaussian;
    double sigma2 = 1.0;
};

/// Outcome of one broadcast for a replica pair under the four-case model.
/// Given D_t, the two reception indicators and dtheta_t, returns D_{t+1}.
double drift_case_table(double d_t, bool first_received, bool second_received, double delta);

/// Simulates `trials` independent replica pairs for T broadcasts starting at
/// D_0 = 0 and returns the empirical E_t. Trials are processed in fixed-size
/// chunks reduced in chunk order, so the result does not depend on `threads`.
DriftTrajectory mc_drift_process(double p, const UpdateSampler& sampler, std::size_t iterations,
                                 std::size_t trials, std::uint64_t seed, std::size_t threads = 1);

/// Mean over the last `window` entries of ||dtheta||^2 / dim.
double estimate_sigma2(std::span<const std::vector<double>> update_history, std::size_t window);

using WorkerPair = std::pair<std::size_t, std::size_t>;

/// All pairs (i<k) for up to 8 workers, otherwise a fixed seeded subset of 32.
std::vector<WorkerPair> drift_pairs(std::size_t workers, std::uint64_t seed);

/// ||theta^(i,j) - theta^(k,j)||^2 / dim_j for each pair; views are full-model vectors.
std::vector<double> pairwise_drift(std::span<const ParamVector> views, const ShardLayout& layout,
                                   std::size_t shard, std::span<const WorkerPair> pairs);
std::vector<double> pairwise_drift(std::span<const ParamVector> views, const ShardLayout& layout,
                                   std::size_t shard);

struct DriftCheck {
    double p = 0.0;
    double sigma2 = 0.0;
    double tail_mean = 0.0;
    double predicted = 0.0;
    double relative_error = 0.0;
    bool within_tolerance = false;
    DriftTrajectory monte_carlo;
};

/// Monte Carlo tail mean over the second half of the run versus the steady state.
DriftCheck verify_drift(double p, double sigma2, std::size_t trials, std::size_t iterations, std::uint64_t seed,
                        double tolerance, std::size_t threads = 1);

/// CSV with header `source,t,E_t`.
void write_trajectories_csv(std::ostream& out, std::span<const DriftTrajectory> trajectories);

}  // namespace lossync
