#include "debias/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace debias {

double PropensityModel::at(int rating) const {
    auto it = propensity.find(rating);
    if (it == propensity.end()) throw Error("RatingOutOfRange", "no propensity for rating " + std::to_string(rating));
    return it->second;
}

nlohmann::json PropensityModel::to_json() const {
    nlohmann::json p = nlohmann::json::object();
    for (const auto& [r, v] : propensity) p[std::to_string(r)] = v;
    return {{"version", 1}, {"propensity", p}, {"observed_rate", observed_rate}, {"clip_min", clip_min}};
}

PropensityModel PropensityModel::from_json(const nlohmann::json& j) {
    PropensityModel m;
    m.observed_rate = j.at("observed_rate");
    m.clip_min = j.at("clip_min");
    for (const auto& [k, v] : j.at("propensity").items()) m.propensity[std::stoi(k)] = v.get<double>();
    return m;
}

PropensityModel fit_nb_propensity(const std::map<int, double>& mnar_hist,
                                  const std::map<int, double>& mar_hist,
                                  double observed_fraction, double clip_min) {
    if (mnar_hist.empty() || mar_hist.empty())
        throw Error("EmptyCounts", "propensity fitting needs non-empty histograms");
    double mnar_total = 0.0, mar_total = 0.0;
    for (const auto& [r, v] : mnar_hist) mnar_total += v;
    for (const auto& [r, v] : mar_hist) mar_total += v;
    if (mnar_total <= 0 || mar_total <= 0) throw Error("EmptyCounts", "histograms sum to zero");

    PropensityModel model;
    model.observed_rate = observed_fraction;
    model.clip_min = clip_min;
    for (const auto& [r, v] : mnar_hist) {
        auto it = mar_hist.find(r);
        double mar_mass = it == mar_hist.end() ? 0.0 : it->second / mar_total;
        if (mar_mass <= 0.0) {
            if (v > 0.0) throw Error("ZeroMarMass", "rating " + std::to_string(r) + " has MAR mass 0");
            continue;
        }
        double p = (v / mnar_total) * observed_fraction / mar_mass;
        model.propensity[r] = std::clamp(p, clip_min, 1.0);
    }
    // ratings seen only in the MAR sample are effectively never observed;
    // they get the clip floor so downstream lookups stay defined
    for (const auto& [r, v] : mar_hist)
        if (v > 0.0 && !model.propensity.count(r)) model.propensity[r] = clip_min;
    return model;
}

EvalReport weighted_evaluate(std::span<const double> scores, std::span<const int> labels,
                             std::span<const double> weights, double threshold) {
    if (scores.size() != labels.size() || scores.size() != weights.size())
        throw Error("LengthMismatch", "scores/labels/weights differ in length");
    if (scores.empty()) throw Error("LengthMismatch", "empty inputs");

    EvalReport rep;
    rep.threshold = threshold;
    rep.n_rows = scores.size();

    double wpos = 0.0, wneg = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw Error("DegenerateLabels", "labels must be 0/1");
        (labels[i] == 1 ? wpos : wneg) += weights[i];
    }

    if (wpos <= 0.0 || wneg <= 0.0) {
        rep.auc_defined = false;
        rep.auc = 0.5;
    } else {
        // weighted concordance by a single sweep over sorted scores
        std::vector<std::size_t> order(scores.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
        double concordant = 0.0, cum_neg = 0.0;
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            double block_neg = 0.0, block_pos = 0.0;
            while (j < order.size() && scores[order[j]] == scores[order[i]]) {
                if (labels[order[j]] == 1)
                    block_pos += weights[order[j]];
                else
                    block_neg += weights[order[j]];
                ++j;
            }
            concordant += block_pos * (cum_neg + 0.5 * block_neg);
            cum_neg += block_neg;
            i = j;
        }
        rep.auc = concordant / (wpos * wneg);
    }

    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] >= threshold;
        if (pred && labels[i] == 1) tp += weights[i];
        else if (pred && labels[i] == 0) fp += weights[i];
        else if (!pred && labels[i] == 1) fn += weights[i];
    }
    rep.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    rep.recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    double denom = rep.precision + rep.recall;
    rep.f1 = denom > 0 ? 2.0 * rep.precision * rep.recall / denom : 0.0;
    return rep;
}

EvalReport ips_evaluate(const FittedClickModel& model, const Dataset& dataset,
                        std::span<const double> propensities, double threshold,
                        double clip_min) {
    if (propensities.size() != dataset.records.size())
        throw Error("LengthMismatch", "propensities do not match dataset size");
    auto scores = predict_dataset(model, dataset);
    std::vector<int> labels;
    labels.reserve(dataset.records.size());
    for (const auto& r : dataset.records) labels.push_back(r.click);

    std::vector<double> w(propensities.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        double p = std::clamp(propensities[i], clip_min, 1.0);
        w[i] = 1.0 / p;
    }
    EvalReport rep = weighted_evaluate(scores, labels, w, threshold);

    // self-normalized variant: weights rescaled to sum N
    double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<double> snips_w(w);
    double scale = static_cast<double>(w.size()) / wsum;
    for (auto& v : snips_w) v *= scale;
    EvalReport sn = weighted_evaluate(scores, labels, snips_w, threshold);
    rep.snips_auc = sn.auc;
    rep.snips_precision = sn.precision;
    rep.snips_recall = sn.recall;
    rep.snips_f1 = sn.f1;
    return rep;
}

EvalReport stratified_evaluate(const FittedClickModel& model, const Dataset& dataset,
                               const BinAssignment& bins, double threshold) {
    if (bins.bin_index.size() != dataset.records.size())
        throw Error("LengthMismatch", "bin assignment does not match dataset");
    auto scores = predict_dataset(model, dataset);

    std::vector<StratumMetrics> strata;
    double auc_sum = 0, prec_sum = 0, rec_sum = 0, f1_sum = 0;
    std::size_t n_used = 0, n_auc = 0, total_rows = 0;
    for (int k = 0; k < bins.k; ++k) {
        StratumMetrics sm;
        sm.stratum = k;
        std::vector<double> s;
        std::vector<int> y;
        for (std::size_t i = 0; i < dataset.records.size(); ++i)
            if (bins.bin_index[i] == k) {
                s.push_back(scores[i]);
                y.push_back(dataset.records[i].click);
            }
        sm.n_rows = s.size();
        if (s.empty()) {
            sm.skipped = true;
            strata.push_back(sm);
            continue;
        }
        EvalReport r = evaluate(s, y, threshold);
        sm.auc_defined = r.auc_defined;
        sm.auc = r.auc;
        sm.precision = r.precision;
        sm.recall = r.recall;
        sm.f1 = r.f1;
        strata.push_back(sm);
        prec_sum += r.precision;
        rec_sum += r.recall;
        f1_sum += r.f1;
        ++n_used;
        total_rows += s.size();
        if (r.auc_defined) {
            auc_sum += r.auc;
            ++n_auc;
        }
    }
    if (n_used == 0) throw Error("AllStrataEmpty", "every stratum is empty");

    EvalReport rep;
    rep.threshold = threshold;
    rep.n_rows = total_rows;
    rep.precision = prec_sum / static_cast<double>(n_used);
    rep.recall = rec_sum / static_cast<double>(n_used);
    rep.f1 = f1_sum / static_cast<double>(n_used);
    if (n_auc > 0) {
        rep.auc_defined = true;
        rep.auc = auc_sum / static_cast<double>(n_auc);
    } else {
        // every stratum is single-class, so no within-stratum ranking exists;
        // fall back to the pooled AUC rather than inventing a 0.5
        std::vector<int> labels;
        labels.reserve(dataset.records.size());
        for (const auto& r : dataset.records) labels.push_back(r.click);
        EvalReport pooled = evaluate(scores, labels, threshold);
        rep.auc_defined = pooled.auc_defined;
        rep.auc = pooled.auc;
    }
    rep.per_stratum = std::move(strata);
    return rep;
}

}  // namespace debias
