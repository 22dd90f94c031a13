#pragma once

#include <map>
#include <span>

#include <json.hpp>

#include "debias/click_model.hpp"
#include "debias/core_data.hpp"
#include "debias/metrics.hpp"

namespace debias {

// Naive Bayes propensity model over explicit rating values.
struct PropensityModel {
    std::map<int, double> propensity;  // rating -> p(O=1 | Y=r), clipped
    double observed_rate = 0.0;
    double clip_min = 0.01;

    double at(int rating) const;
    nlohmann::json to_json() const;
    static PropensityModel from_json(const nlohmann::json& j);
};

// p(O=1 | Y=r) = p_MNAR(Y=r | O=1) * p(O=1) / p_MAR(Y=r), clipped to
// [clip_min, 1]. Histograms may be unnormalized counts.
PropensityModel fit_nb_propensity(const std::map<int, double>& mnar_hist,
                                  const std::map<int, double>& mar_hist,
                                  double observed_fraction, double clip_min = 0.01);

// Inverse-propensity-weighted metrics: every confusion-matrix entry and the
// pairwise AUC statistic carry per-row weights 1/p. The SNIPS variant
// (weights rescaled to sum N) is reported alongside.
EvalReport ips_evaluate(const FittedClickModel& model, const Dataset& dataset,
                        std::span<const double> propensities, double threshold = 0.5,
                        double clip_min = 0.01);

// Weighted metrics for precomputed scores (ips_evaluate uses this).
EvalReport weighted_evaluate(std::span<const double> scores, std::span<const int> labels,
                             std::span<const double> weights, double threshold = 0.5);

// Per-stratum metrics averaged with equal stratum weights. Empty strata are
// skipped and flagged; single-class strata are skipped for AUC only.
EvalReport stratified_evaluate(const FittedClickModel& model, const Dataset& dataset,
                               const BinAssignment& bins, double threshold = 0.5);

}  // namespace debias
