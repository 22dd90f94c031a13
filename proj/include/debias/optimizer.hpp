#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "debias/core_data.hpp"

namespace debias {

enum class GpKernel { matern52, rbf };

struct BoConfig {
    int n_iter = 50;
    int n_init = 0;  // 0 means 2*dim + 1
    std::vector<std::pair<double, double>> bounds;  // empty means [0.05, 1] per dim
    GpKernel kernel = GpKernel::matern52;
    double length_scale = 0.2;     // on normalized [0,1] coordinates
    double noise_variance = 1e-4;  // on z-scored objective values
    double xi = 0.01;
    int n_candidates = 2048;
    std::uint64_t seed = 0;

    void check() const;
};

struct BoTrace {
    std::vector<std::vector<double>> points;
    std::vector<double> values;       // value used for the surrogate
    std::vector<bool> non_finite;     // objective returned a non-finite value
    std::vector<double> best_point;
    double best_value = 0.0;
    std::size_t best_index = 0;
};

// Exact GP regression with constant prior mean equal to the mean of the
// observations. Coordinates are used as given; the caller normalizes.
void gp_posterior(const std::vector<std::vector<double>>& points,
                  const std::vector<double>& values,
                  const std::vector<std::vector<double>>& queries, const BoConfig& cfg,
                  std::vector<double>& mean_out, std::vector<double>& var_out);

// Expected improvement for minimization.
double expected_improvement(double mean, double variance, double best_so_far, double xi);

// Bayesian optimization: Latin-hypercube initialization followed by
// sequential EI-maximizing evaluations (candidate set plus coordinate
// refinement). Deterministic under cfg.seed.
BoTrace minimize(const std::function<double(const std::vector<double>&)>& objective,
                 int dim, const BoConfig& cfg);

}  // namespace debias
