#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/core_data.hpp"
#include "debias/metrics.hpp"
#include "debias/pipeline.hpp"

namespace debias {

// ---- dataset files -------------------------------------------------------
// Internal format: a CSV (user_id, item_id, exposure, click, x_nr,
// x_r_0..x_r_{d-1}) with a JSON schema sidecar at <path>.schema.json.

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Generic CSV ingestion: the mapping designates which header names carry
// ids, features and the bias attribute. A missing exposure column defaults
// to E=1 with a warning; categorical feature columns are one-hot encoded in
// stable (sorted label) order.
struct SchemaMapping {
    std::string user_col;
    std::string item_col;
    std::vector<std::string> x_r_cols;
    std::string x_nr_col;
    std::string exposure_col;  // empty: absent
    std::string click_col;     // empty: absent (defaults to 0)
    Split split = Split::train;
};

Dataset load_csv(const std::filesystem::path& path, const SchemaMapping& mapping,
                 std::vector<std::string>* warnings = nullptr);

// ---- Coat ----------------------------------------------------------------
// Expects the Coat distribution layout: train.ascii / test.ascii rating
// grids (users x items, 0 = unobserved) and binary feature matrices under
// user_item_features/. x_nr is the Naive Bayes propensity of the cell's
// rating; clicks are ratings >= 4.

struct CoatData {
    Dataset train;  // MNAR, split=train
    Dataset test;   // MAR, split=benchmark
    nlohmann::json propensity_model;
};

CoatData load_coat(const std::filesystem::path& dir, int n_users = 290, int n_items = 300);

// ---- experiments ---------------------------------------------------------

struct SourceSpec {
    std::string name;
    std::string kind;  // csv | coat_train | coat_test | split
    std::string path;  // csv path or coat directory
    // kind == split
    std::string from;
    double fraction = 0.2;
    std::string part = "head";  // head: first fraction of a seeded shuffle
};

struct ScenarioConfig {
    std::string id;
    std::string train_source;
    std::string eval_source;
    std::string debias_target = "none";   // none | eval | train
    std::string eval_method = "plain";    // plain | ips | stratified
    std::string train_weighting = "none"; // none | ips (inverse x_nr row weights)
    bool include_bias_factor = false;
    std::string benchmark;  // scenario id drift is computed against
};

struct ExperimentConfig {
    std::vector<SourceSpec> sources;
    std::vector<ScenarioConfig> scenarios;
    PipelineConfig pipeline;
    ClickModelConfig model;
    double threshold = 0.5;
    std::string output_dir = "out";
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json click_config_to_json(const ClickModelConfig& cfg);
ClickModelConfig click_config_from_json(const nlohmann::json& j);

// Runs every scenario, isolating failures, and writes per-scenario report
// JSONs, a consolidated CSV with drift vs each scenario's benchmark, BO
// traces/weights for debias runs, and a manifest sufficient to reproduce
// the run byte for byte.
void run_experiment(const ExperimentConfig& cfg);

// Score-distribution plot data: bin,pre_density,post_density,reference_density.
void write_score_distribution_csv(const std::filesystem::path& path,
                                  const std::vector<double>& pre,
                                  const std::vector<double>& post,
                                  const std::vector<double>& reference, int n_bins = 20);

// Consolidated-table helper (exposed for tests).
std::string consolidated_csv(const std::vector<std::pair<std::string, EvalReport>>& rows,
                             const std::map<std::string, std::string>& benchmark_of);

}  // namespace debias
