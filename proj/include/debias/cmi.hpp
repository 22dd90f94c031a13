#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "debias/core_data.hpp"

namespace debias {

enum class Activation { relu, tanh_act };
enum class DependenceTarget { exposure, bias_attribute };

struct StatNetConfig {
    std::vector<int> hidden_layers{64, 64};
    Activation activation = Activation::relu;
    double learning_rate = 1e-3;
    int epochs = 200;
    int batch_size = 256;
    double ema_decay = 0.99;  // bias correction for the log-denominator gradient
    int knn_k = 5;
    std::uint64_t seed = 0;

    void check() const;
};

struct CmiEstimate {
    double value = 0.0;               // nats, clamped below at 0
    std::vector<double> train_curve;  // unclamped per-epoch DV objective
    std::size_t n_joint = 0;
    std::size_t n_marginal = 0;
};

// Approximates samples from P(X) P(E|X) P(C|X): each row keeps (x_r, e) but
// its click is replaced by the click of a uniformly chosen row among its
// knn_k nearest neighbours in x_r (Euclidean, self excluded).
Dataset conditional_permutation(const Dataset& dataset, int knn_k, std::uint64_t seed);

// Donsker-Varadhan neural estimate of I(target; C | X^r), trained by
// gradient ascent on joint vs conditionally permuted minibatches.
CmiEstimate estimate_cmi_dv(const Dataset& dataset, const StatNetConfig& cfg,
                            DependenceTarget target = DependenceTarget::exposure);

// Exact evaluation of the conditional mutual information for finite
// supports; counts[bucket][e*2 + c]. Test oracle, 0 log 0 := 0.
double plugin_cmi_discrete(const std::vector<std::array<double, 4>>& counts);

}  // namespace debias
