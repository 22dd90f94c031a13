#pragma once

#include <cstdint>
#include <vector>

#include "debias/core_data.hpp"

namespace debias {

// K non-negative resampling weights, one per stratum of the bias attribute.
struct WeightVector {
    std::vector<double> w;

    void check() const;  // throws on invalid weights
};

enum class PerturbMode { partial, full };

struct PerturbationConfig {
    double perturb_fraction = 0.1;  // partial mode: fraction redrawn
    PerturbMode mode = PerturbMode::partial;
    std::uint64_t seed = 0;
};

// Stratifies the bias attribute. Continuous attributes get equal-frequency
// (quantile) bins with ties at an edge going to the lower bin; categorical
// attributes map labels in stable sorted-code order. Fewer than k distinct
// continuous values yields a degenerate assignment with effective k' < k.
BinAssignment discretize(const Dataset& dataset, int k);

// Weighted resampling per the stratum weights. full: all N rows redrawn
// with replacement, row i with probability proportional to w[bin(i)].
// partial: ceil((1-rho)N) rows kept uniformly without replacement (original
// order), the remaining floor(rho*N) redrawn under the weighted law.
Dataset resample(const Dataset& dataset, const BinAssignment& bins,
                 const WeightVector& weights, const PerturbationConfig& cfg);

// Per-stratum sampling probabilities q_k = n_k w_k / sum_j n_j w_j.
std::vector<double> effective_sampling_distribution(const BinAssignment& bins,
                                                    const WeightVector& weights);

}  // namespace debias
