#pragma once

#include <cstdint>
#include <vector>

#include "debias/click_model.hpp"
#include "debias/cmi.hpp"
#include "debias/core_data.hpp"
#include "debias/optimizer.hpp"
#include "debias/perturbation.hpp"

namespace debias {

struct PipelineConfig {
    int k = 5;             // bias-attribute strata
    double lambda = 1.0;   // dependence penalty weight
    DependenceTarget dependence_target = DependenceTarget::exposure;
    PerturbationConfig perturbation;
    StatNetConfig cmi;
    ClickModelConfig click;
    BoConfig bo;
    int n_folds = 5;
    // reduced training budgets inside the optimization loop; the full cmi /
    // click budgets are used for the final diagnostics
    int loop_cmi_epochs = 100;
    int loop_click_epochs = 50;
    std::uint64_t seed = 0;

    void check() const;
};

struct JointLossResult {
    double loss = 0.0;
    double bce_term = 0.0;  // held-out-fold mean BCE
    double cmi_term = 0.0;  // clamped DV estimate
};

// L = held-out BCE + lambda * I(target; C | X^r), both models trained on
// the sample with the loop budgets.
JointLossResult joint_loss(const Dataset& sample, const PipelineConfig& cfg);

struct DebiasResult {
    Dataset debiased;
    WeightVector optimal_weights;
    BinAssignment bins;
    BoTrace trace;
    std::vector<JointLossResult> trial_components;  // aligned with trace.points
    CmiEstimate pre_cmi, post_cmi;
    double pre_bce = 0.0, post_bce = 0.0;
    double duplicate_fraction = 0.0;  // share of non-unique rows in the output
    std::uint64_t final_seed = 0;     // resampling seed of the winning trial
};

// Full weight search: discretize the bias attribute, optimize stratum
// weights against the joint loss with Bayesian optimization, resample with
// the optimum, and attach before/after diagnostics.
DebiasResult debias(const Dataset& dataset, const PipelineConfig& cfg);

// Mean held-out-fold BCE (deterministic fold assignment under seed).
double cross_validated_bce(const Dataset& dataset, const ClickModelConfig& cfg, int n_folds,
                           std::uint64_t seed);

}  // namespace debias
