#include "debias/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "debias/rng.hpp"

namespace debias {

void PipelineConfig::check() const {
    if (k < 1) throw Error("BadConfig", "k must be >= 1");
    if (lambda < 0) throw Error("BadConfig", "lambda must be non-negative");
    if (n_folds < 2) throw Error("BadConfig", "n_folds must be >= 2");
    if (loop_cmi_epochs < 1 || loop_click_epochs < 1)
        throw Error("BadConfig", "loop budgets must be positive");
    cmi.check();
    click.check();
}

double cross_validated_bce(const Dataset& dataset, const ClickModelConfig& cfg, int n_folds,
                           std::uint64_t seed) {
    const std::size_t n = dataset.records.size();
    if (n < static_cast<std::size_t>(n_folds))
        throw Error("EmptyDataset", "fewer rows than folds");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::SeqRng shuffle(seed, rng::tag_hash("cv-folds"));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    double total = 0.0;
    int used = 0;
    for (int f = 0; f < n_folds; ++f) {
        Dataset train = dataset, held = dataset;
        train.records.clear();
        held.records.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (static_cast<int>(i % static_cast<std::size_t>(n_folds)) == f)
                held.records.push_back(dataset.records[order[i]]);
            else
                train.records.push_back(dataset.records[order[i]]);
        }
        if (held.records.empty() || train.records.empty()) continue;
        FittedClickModel m = fit(train, cfg);
        total += bce_loss(m, held);
        ++used;
    }
    if (used == 0) throw Error("EmptyDataset", "no usable folds");
    return total / used;
}

namespace {

JointLossResult joint_loss_impl(const Dataset& sample, const PipelineConfig& cfg,
                                int cmi_epochs, int click_epochs, std::uint64_t seed) {
    Dataset standardized = standardize_features(sample).first;

    StatNetConfig cmi_cfg = cfg.cmi;
    cmi_cfg.epochs = cmi_epochs;
    cmi_cfg.seed = rng::derive(seed, "joint-cmi");
    CmiEstimate est = estimate_cmi_dv(standardized, cmi_cfg, cfg.dependence_target);

    ClickModelConfig click_cfg = cfg.click;
    click_cfg.epochs = click_epochs;
    click_cfg.seed = rng::derive(seed, "joint-click");
    double bce = cross_validated_bce(standardized, click_cfg, cfg.n_folds,
                                     rng::derive(seed, "joint-folds"));

    JointLossResult out;
    out.bce_term = bce;
    out.cmi_term = est.value;
    out.loss = bce + cfg.lambda * est.value;
    return out;
}

}  // namespace

JointLossResult joint_loss(const Dataset& sample, const PipelineConfig& cfg) {
    cfg.check();
    return joint_loss_impl(sample, cfg, cfg.loop_cmi_epochs, cfg.loop_click_epochs, cfg.seed);
}

DebiasResult debias(const Dataset& dataset, const PipelineConfig& cfg) {
    cfg.check();
    auto violations = validate(dataset);
    if (!violations.empty())
        throw Error("InvalidDataset", "dataset fails validation (" + violations.front().rule + ")");

    DebiasResult result;
    result.bins = discretize(dataset, cfg.k);
    const int k_eff = result.bins.k;

    std::vector<JointLossResult> components;
    std::vector<std::uint64_t> trial_seeds;
    auto objective = [&](const std::vector<double>& w) {
        std::size_t trial = components.size();
        std::uint64_t trial_seed = rng::derive(cfg.seed, "trial", trial);
        PerturbationConfig pcfg = cfg.perturbation;
        pcfg.seed = trial_seed;
        Dataset sample = resample(dataset, result.bins, WeightVector{w}, pcfg);
        JointLossResult jl =
            joint_loss_impl(sample, cfg, cfg.loop_cmi_epochs, cfg.loop_click_epochs, trial_seed);
        components.push_back(jl);
        trial_seeds.push_back(trial_seed);
        return jl.loss;
    };

    BoConfig bo = cfg.bo;
    bo.seed = rng::derive(cfg.seed, "bo");
    result.trace = minimize(objective, k_eff, bo);
    result.trial_components = std::move(components);
    result.optimal_weights = WeightVector{result.trace.best_point};
    result.final_seed = trial_seeds.at(result.trace.best_index);

    PerturbationConfig final_cfg = cfg.perturbation;
    final_cfg.seed = result.final_seed;
    result.debiased = resample(dataset, result.bins, result.optimal_weights, final_cfg);

    // duplicate share in the output (resampling open question diagnostic)
    {
        std::map<std::pair<std::string, std::string>, std::size_t> seen;
        for (const auto& r : result.debiased.records) seen[{r.user_id, r.item_id}]++;
        std::size_t dup = 0;
        for (const auto& [key, cnt] : seen) dup += cnt - 1;
        result.duplicate_fraction =
            static_cast<double>(dup) / static_cast<double>(result.debiased.records.size());
    }

    // full-budget diagnostics on input vs output
    Dataset pre_std = standardize_features(dataset).first;
    Dataset post_std = standardize_features(result.debiased).first;
    StatNetConfig diag = cfg.cmi;
    diag.seed = rng::derive(cfg.seed, "diag-cmi");
    result.pre_cmi = estimate_cmi_dv(pre_std, diag, cfg.dependence_target);
    result.post_cmi = estimate_cmi_dv(post_std, diag, cfg.dependence_target);
    ClickModelConfig click_cfg = cfg.click;
    click_cfg.seed = rng::derive(cfg.seed, "diag-click");
    result.pre_bce = cross_validated_bce(pre_std, click_cfg, cfg.n_folds,
                                         rng::derive(cfg.seed, "diag-folds"));
    result.post_bce = cross_validated_bce(post_std, click_cfg, cfg.n_folds,
                                          rng::derive(cfg.seed, "diag-folds"));
    return result;
}

}  // namespace debias
