#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "debias/baselines.hpp"
#include "debias/cli_io.hpp"
#include "debias/metrics.hpp"
#include "debias/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw debias::Error("MissingFile", "cannot open " + path);
    return json::parse(in);
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

int cmd_generate(const std::string& out_dir, const json& overrides, long n_mc) {
    debias::SyntheticConfig cfg;
    cfg.n_users = overrides.value("n_users", cfg.n_users);
    cfg.n_items = overrides.value("n_items", cfg.n_items);
    cfg.feature_dim = overrides.value("feature_dim", cfg.feature_dim);
    cfg.bias_strength = overrides.value("bias_strength", cfg.bias_strength);
    cfg.relevance_strength = overrides.value("relevance_strength", cfg.relevance_strength);
    cfg.click_strength = overrides.value("click_strength", cfg.click_strength);
    cfg.exposure_budget = overrides.value("exposure_budget", cfg.exposure_budget);
    cfg.x_nr_dist = overrides.value("x_nr_dist", "uniform01") == std::string("exponential")
                        ? debias::XnrDist::exponential
                        : debias::XnrDist::uniform01;
    cfg.seed = overrides.value("seed", cfg.seed);

    fs::create_directories(out_dir);
    auto data = debias::generate(cfg);
    debias::save_dataset(data.mnar, fs::path(out_dir) / "mnar.csv");
    debias::save_dataset(data.mar_oracle, fs::path(out_dir) / "mar.csv");

    auto oracle = debias::true_cmi(cfg, n_mc);
    json params{{"n_users", cfg.n_users},
                {"n_items", cfg.n_items},
                {"feature_dim", cfg.feature_dim},
                {"bias_strength", cfg.bias_strength},
                {"relevance_strength", cfg.relevance_strength},
                {"click_strength", cfg.click_strength},
                {"exposure_budget", cfg.exposure_budget},
                {"x_nr_dist", cfg.x_nr_dist == debias::XnrDist::uniform01 ? "uniform01" : "exponential"},
                {"seed", cfg.seed},
                {"beta0", data.beta0},
                {"true_cmi", oracle.value},
                {"true_cmi_std_error", oracle.std_error},
                {"n_mc", n_mc},
                {"mnar_rows", data.mnar.records.size()},
                {"mar_rows", data.mar_oracle.records.size()}};
    write_json((fs::path(out_dir) / "params.json").string(), params);
    std::cout << "wrote " << out_dir << " (mnar " << data.mnar.records.size() << " rows, true CMI "
              << oracle.value << ")\n";
    return 0;
}

int cmd_debias(const std::string& input, const std::string& config_path,
               const std::string& out_dir) {
    debias::PipelineConfig cfg;
    if (!config_path.empty()) cfg = debias::pipeline_config_from_json(read_json(config_path));
    debias::Dataset data = debias::load_dataset(input);
    auto res = debias::debias(data, cfg);

    fs::create_directories(out_dir);
    debias::save_dataset(res.debiased, fs::path(out_dir) / "debiased.csv");
    json summary{{"optimal_weights", res.optimal_weights.w},
                 {"best_loss", res.trace.best_value},
                 {"pre_cmi", res.pre_cmi.value},
                 {"post_cmi", res.post_cmi.value},
                 {"pre_bce", res.pre_bce},
                 {"post_bce", res.post_bce},
                 {"duplicate_fraction", res.duplicate_fraction},
                 {"final_seed", res.final_seed}};
    write_json((fs::path(out_dir) / "weights.json").string(), summary);

    std::ofstream trace(fs::path(out_dir) / "trace.csv");
    trace << "trial";
    for (int k = 0; k < res.bins.k; ++k) trace << ",w_" << (k + 1);
    trace << ",loss,cmi_term,bce_term\n";
    for (std::size_t t = 0; t < res.trace.points.size(); ++t) {
        trace << t;
        for (double w : res.trace.points[t]) trace << ',' << w;
        trace << ',' << res.trial_components[t].loss << ',' << res.trial_components[t].cmi_term
              << ',' << res.trial_components[t].bce_term << "\n";
    }
    std::cout << "pre CMI " << res.pre_cmi.value << " -> post CMI " << res.post_cmi.value << "\n";
    return 0;
}

int cmd_evaluate(const std::string& data_path, const std::string& model_path,
                 const std::string& train_path, const std::string& model_config,
                 const std::string& method, int k, double threshold, const std::string& out,
                 const std::string& save_model) {
    debias::Dataset data = debias::load_dataset(data_path);
    debias::FittedClickModel model;
    if (!model_path.empty()) {
        model = debias::FittedClickModel::from_json(read_json(model_path));
    } else if (!train_path.empty()) {
        debias::ClickModelConfig cfg;
        if (!model_config.empty()) cfg = debias::click_config_from_json(read_json(model_config));
        model = debias::fit(debias::load_dataset(train_path), cfg);
        if (!save_model.empty()) write_json(save_model, model.to_json());
    } else {
        std::cerr << "evaluate: need --model or --train\n";
        return 1;
    }

    debias::EvalReport rep;
    if (method == "plain") {
        auto scores = debias::predict_dataset(model, data);
        std::vector<int> labels;
        for (const auto& r : data.records) labels.push_back(r.click);
        rep = debias::evaluate(scores, labels, threshold);
    } else if (method == "ips") {
        std::vector<double> prop;
        for (const auto& r : data.records) prop.push_back(r.x_nr);
        rep = debias::ips_evaluate(model, data, prop, threshold);
    } else if (method == "stratified") {
        rep = debias::stratified_evaluate(model, data, debias::discretize(data, k), threshold);
    } else {
        std::cerr << "evaluate: unknown method " << method << "\n";
        return 1;
    }
    json j = rep.to_json();
    if (out.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_json(out, j);
    return 0;
}

int cmd_report(const std::string& pre_path, const std::string& post_path,
               const std::string& ref_path, const std::string& model_path, int bins,
               const std::string& out) {
    auto model = debias::FittedClickModel::from_json(read_json(model_path));
    auto scores_of = [&](const std::string& p) -> std::vector<double> {
        if (p.empty()) return {};
        return debias::predict_dataset(model, debias::load_dataset(p));
    };
    debias::write_score_distribution_csv(out, scores_of(pre_path), scores_of(post_path),
                                         scores_of(ref_path), bins);
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CMI-guided debiasing of ranking-evaluation data"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "generate a synthetic MNAR/MAR dataset pair");
    std::string gen_out = "synthetic";
    json gen_overrides = json::object();
    int gen_users = 100, gen_items = 100, gen_dim = 8;
    double gen_bias = 0.0, gen_budget = 0.3;
    std::uint64_t gen_seed = 0;
    long gen_nmc = 200000;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--n-users", gen_users);
    gen->add_option("--n-items", gen_items);
    gen->add_option("--feature-dim", gen_dim);
    gen->add_option("--bias-strength", gen_bias);
    gen->add_option("--exposure-budget", gen_budget);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--n-mc", gen_nmc, "Monte-Carlo draws for the CMI oracle");

    // debias
    auto* deb = app.add_subcommand("debias", "search resampling weights and emit debiased data");
    std::string deb_input, deb_config, deb_out = "debias_out";
    deb->add_option("--input", deb_input)->required();
    deb->add_option("--config", deb_config, "pipeline config JSON");
    deb->add_option("--out", deb_out);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a click model on a dataset");
    std::string ev_data, ev_model, ev_train, ev_model_cfg, ev_method = "plain", ev_out, ev_save;
    int ev_k = 5;
    double ev_threshold = 0.5;
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--model", ev_model, "fitted model JSON");
    ev->add_option("--train", ev_train, "fit a model on this dataset instead");
    ev->add_option("--model-config", ev_model_cfg);
    ev->add_option("--method", ev_method, "plain | ips | stratified");
    ev->add_option("--k", ev_k, "strata for stratified evaluation");
    ev->add_option("--threshold", ev_threshold);
    ev->add_option("--out", ev_out, "report JSON path (stdout if omitted)");
    ev->add_option("--save-model", ev_save);

    // experiment
    auto* exp = app.add_subcommand("experiment", "run a scenario grid from a config file");
    std::string exp_config, exp_out_override;
    std::int64_t exp_seed_override = -1;
    exp->add_option("--config", exp_config)->required();
    exp->add_option("--output-dir", exp_out_override, "override config output_dir");
    exp->add_option("--seed", exp_seed_override, "override config seed");

    // report
    auto* rep = app.add_subcommand("report", "score-distribution plot data (pre/post/reference)");
    std::string rep_pre, rep_post, rep_ref, rep_model, rep_out = "distribution.csv";
    int rep_bins = 20;
    rep->add_option("--pre", rep_pre)->required();
    rep->add_option("--post", rep_post)->required();
    rep->add_option("--ref", rep_ref);
    rep->add_option("--model", rep_model)->required();
    rep->add_option("--bins", rep_bins);
    rep->add_option("--out", rep_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            gen_overrides["n_users"] = gen_users;
            gen_overrides["n_items"] = gen_items;
            gen_overrides["feature_dim"] = gen_dim;
            gen_overrides["bias_strength"] = gen_bias;
            gen_overrides["exposure_budget"] = gen_budget;
            gen_overrides["seed"] = gen_seed;
            return cmd_generate(gen_out, gen_overrides, gen_nmc);
        }
        if (deb->parsed()) return cmd_debias(deb_input, deb_config, deb_out);
        if (ev->parsed())
            return cmd_evaluate(ev_data, ev_model, ev_train, ev_model_cfg, ev_method, ev_k,
                                ev_threshold, ev_out, ev_save);
        if (exp->parsed()) {
            auto cfg = debias::ExperimentConfig::from_json(read_json(exp_config));
            if (!exp_out_override.empty()) cfg.output_dir = exp_out_override;
            if (exp_seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(exp_seed_override);
            debias::run_experiment(cfg);
            std::cout << "experiment artifacts in " << cfg.output_dir << "\n";
            return 0;
        }
        if (rep->parsed()) return cmd_report(rep_pre, rep_post, rep_ref, rep_model, rep_bins, rep_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
