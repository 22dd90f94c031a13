#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/core_data.hpp"

namespace debias {

enum class ClickModelKind { logistic, boosted_stumps };

struct ClickModelConfig {
    ClickModelKind model_kind = ClickModelKind::logistic;
    double l2 = 1e-4;
    double learning_rate = 0.1;
    int epochs = 100;
    int n_stumps = 200;            // boosted_stumps only
    double shrinkage = 0.1;        // boosted_stumps only
    bool include_bias_factor = false;
    std::uint64_t seed = 0;

    void check() const;
};

struct Stump {
    int feature = 0;
    double threshold = 0.0;
    double left = 0.0;   // value when x[feature] <= threshold
    double right = 0.0;
};

struct FeatureSchema {
    int x_r_dim = 0;
    bool includes_x_nr = false;
    int x_nr_onehot = 0;  // one-hot width when categorical, 0 for a raw scalar

    int input_dim() const {
        return x_r_dim + (includes_x_nr ? (x_nr_onehot > 0 ? x_nr_onehot : 1) : 0);
    }
    bool operator==(const FeatureSchema&) const = default;
};

struct FittedClickModel {
    ClickModelKind kind = ClickModelKind::logistic;
    FeatureSchema schema;

    // logistic parameters
    std::vector<double> weights;
    double bias = 0.0;

    // boosted stump ensemble
    double base_score = 0.0;
    double shrinkage = 0.1;
    std::vector<Stump> stumps;

    std::vector<double> train_loss_curve;
    bool single_class = false;  // all training clicks identical

    nlohmann::json to_json() const;
    static FittedClickModel from_json(const nlohmann::json& j);
};

// Minimizes mean BCE (plus l2 penalty for logistic). Optional per-row
// weights multiply the BCE terms (IPS-weighted training).
FittedClickModel fit(const Dataset& dataset, const ClickModelConfig& cfg,
                     std::span<const double> row_weights = {});

// Feature row per the model schema: x_r plus x_nr (one-hot when the
// dataset is categorical) when include_bias_factor was set.
std::vector<double> build_features(const FeatureSchema& schema, const Dataset& dataset,
                                   std::size_t row);

double predict(const FittedClickModel& model, std::span<const double> x);
std::vector<double> predict_dataset(const FittedClickModel& model, const Dataset& dataset);

double bce_loss(const FittedClickModel& model, const Dataset& dataset);

constexpr double kScoreClamp = 1e-12;

}  // namespace debias
