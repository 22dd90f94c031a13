#include "debias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "debias/click_model.hpp"

namespace debias {

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j{
        {"scenario", scenario}, {"auc", auc},         {"auc_defined", auc_defined},
        {"precision", precision}, {"recall", recall}, {"f1", f1},
        {"threshold", threshold}, {"n_rows", n_rows},
    };
    if (per_stratum) {
        auto& arr = j["per_stratum"] = nlohmann::json::array();
        for (const auto& s : *per_stratum)
            arr.push_back({{"stratum", s.stratum},
                           {"n_rows", s.n_rows},
                           {"skipped", s.skipped},
                           {"auc_defined", s.auc_defined},
                           {"auc", s.auc},
                           {"precision", s.precision},
                           {"recall", s.recall},
                           {"f1", s.f1}});
    }
    if (snips_auc) {
        j["snips"] = {{"auc", *snips_auc},
                      {"precision", *snips_precision},
                      {"recall", *snips_recall},
                      {"f1", *snips_f1}};
    }
    if (w_model_gap) j["wasserstein_model_gap"] = *w_model_gap;
    if (w_subset_gap) j["wasserstein_subset_gap"] = *w_subset_gap;
    return j;
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                    double threshold) {
    if (scores.size() != labels.size())
        throw Error("LengthMismatch", "scores and labels differ in length");
    if (scores.empty()) throw Error("LengthMismatch", "empty inputs");

    EvalReport rep;
    rep.threshold = threshold;
    rep.n_rows = scores.size();

    std::size_t pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw Error("DegenerateLabels", "labels must be 0/1");
        pos += static_cast<std::size_t>(y);
    }
    std::size_t neg = labels.size() - pos;

    // AUC via average ranks (ties get the mean rank of their block)
    if (pos == 0 || neg == 0) {
        rep.auc_defined = false;
        rep.auc = 0.5;
    } else {
        std::vector<std::size_t> order(scores.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
        double pos_rank_sum = 0.0;
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
            double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
            for (std::size_t t = i; t < j; ++t)
                if (labels[order[t]] == 1) pos_rank_sum += avg_rank;
            i = j;
        }
        double p = static_cast<double>(pos), n = static_cast<double>(neg);
        rep.auc = (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
    }

    double tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        bool pred = scores[k] >= threshold;
        if (pred && labels[k] == 1) tp += 1;
        else if (pred && labels[k] == 0) fp += 1;
        else if (!pred && labels[k] == 1) fn += 1;
    }
    rep.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    rep.recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    double denom = rep.precision + rep.recall;
    rep.f1 = denom > 0 ? 2.0 * rep.precision * rep.recall / denom : 0.0;
    return rep;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw Error("EmptySample", "wasserstein_1d needs non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.size() == b.size()) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
        return s / static_cast<double>(a.size());
    }
    // Unequal sizes: integrate |Fa^-1(t) - Fb^-1(t)| over merged breakpoints.
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t ia = 0, ib = 0;
    double t = 0.0, w = 0.0;
    while (ia < a.size() && ib < b.size()) {
        double ta = static_cast<double>(ia + 1) / na;
        double tb = static_cast<double>(ib + 1) / nb;
        double tn = std::min(ta, tb);
        w += (tn - t) * std::abs(a[ia] - b[ib]);
        t = tn;
        if (ta <= tn) ++ia;
        if (tb <= tn) ++ib;
    }
    return w;
}

std::pair<double, double> conditional_score_gap(const Dataset& dataset,
                                                const FittedClickModel& without_bf,
                                                const FittedClickModel& with_bf,
                                                std::span<const std::size_t> subset_a,
                                                std::span<const std::size_t> subset_b) {
    if (without_bf.schema.includes_x_nr)
        throw Error("SchemaMismatch", "first model must exclude the bias attribute");
    if (!with_bf.schema.includes_x_nr)
        throw Error("SchemaMismatch", "second model must include the bias attribute");
    std::vector<double> p_plain = predict_dataset(without_bf, dataset);
    std::vector<double> p_bf = predict_dataset(with_bf, dataset);
    double gap_models = wasserstein_1d(p_plain, p_bf);

    auto gather = [&](std::span<const std::size_t> idx) {
        std::vector<double> v;
        v.reserve(idx.size());
        for (std::size_t i : idx) v.push_back(p_plain.at(i));
        return v;
    };
    double gap_subsets = 0.0;
    if (!subset_a.empty() && !subset_b.empty())
        gap_subsets = wasserstein_1d(gather(subset_a), gather(subset_b));
    return {gap_models, gap_subsets};
}

}  // namespace debias
