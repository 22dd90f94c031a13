#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/core_data.hpp"

namespace debias {

struct StratumMetrics {
    int stratum = 0;
    std::size_t n_rows = 0;
    bool skipped = false;        // empty stratum
    bool auc_defined = false;    // single-class strata have no AUC
    double auc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvalReport {
    double auc = 0.0;
    bool auc_defined = true;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double threshold = 0.5;
    std::size_t n_rows = 0;
    std::string scenario;

    std::optional<std::vector<StratumMetrics>> per_stratum;

    // IPS extras (baselines fills these in)
    std::optional<double> snips_auc, snips_precision, snips_recall, snips_f1;

    // Wasserstein diagnostics
    std::optional<double> w_model_gap;   // score gap between two models
    std::optional<double> w_subset_gap;  // score gap between two row subsets

    nlohmann::json to_json() const;
};

// Threshold/ranking metrics over binary labels. AUC uses the rank
// (Mann-Whitney) statistic with ties counted 0.5; if labels are all one
// class, auc_defined is false and auc reported as 0.5.
EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    double threshold = 0.5);

// Exact W1 between two empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

struct FittedClickModel;

// Dependence-gap diagnostic between a bias-free model and one trained with
// the bias attribute. First value: W1 between the two models' prediction
// distributions on the same rows. Second: W1 between the bias-free model's
// predictions on two caller-designated row subsets.
std::pair<double, double> conditional_score_gap(const Dataset& dataset,
                                                const FittedClickModel& without_bf,
                                                const FittedClickModel& with_bf,
                                                std::span<const std::size_t> subset_a,
                                                std::span<const std::size_t> subset_b);

}  // namespace debias
