#include "debias/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "debias/rng.hpp"

namespace debias {

void WeightVector::check() const {
    if (w.empty()) throw Error("BadWeights", "weight vector is empty");
    bool any_pos = false;
    for (double v : w) {
        if (!std::isfinite(v) || v < 0.0)
            throw Error("BadWeights", "weights must be finite and non-negative");
        any_pos = any_pos || v > 0.0;
    }
    if (!any_pos) throw Error("BadWeights", "at least one weight must be positive");
}

namespace {

// Linear-interpolation empirical quantile on sorted data.
double quantile_sorted(const std::vector<double>& sorted, double p) {
    double idx = p * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = idx - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

BinAssignment discretize(const Dataset& dataset, int k) {
    if (k < 1) throw Error("KMismatch", "k must be positive");
    if (dataset.records.empty()) throw Error("EmptyDataset", "cannot discretize an empty dataset");

    BinAssignment out;
    out.requested_k = k;
    out.bin_index.resize(dataset.records.size());

    if (dataset.x_nr_kind == XnrKind::categorical) {
        std::set<int> codes;
        for (const auto& r : dataset.records) codes.insert(static_cast<int>(r.x_nr));
        if (static_cast<int>(codes.size()) != k)
            throw Error("KMismatch", "categorical x_nr has " + std::to_string(codes.size()) +
                                         " distinct labels, k=" + std::to_string(k));
        std::vector<int> ordered(codes.begin(), codes.end());
        for (std::size_t i = 0; i < dataset.records.size(); ++i) {
            auto it = std::lower_bound(ordered.begin(), ordered.end(),
                                       static_cast<int>(dataset.records[i].x_nr));
            out.bin_index[i] = static_cast<int>(it - ordered.begin());
        }
        out.k = k;
        return out;
    }

    std::vector<double> sorted;
    sorted.reserve(dataset.records.size());
    for (const auto& r : dataset.records) sorted.push_back(r.x_nr);
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> edges;
    for (int j = 1; j < k; ++j)
        edges.push_back(quantile_sorted(sorted, static_cast<double>(j) / k));
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    // Edges at the global extremes would leave an empty bottom or top bin
    // (ties go to the lower bin, so an edge equal to the maximum strands it).
    while (!edges.empty() && edges.front() <= sorted.front()) edges.erase(edges.begin());
    while (!edges.empty() && edges.back() >= sorted.back()) edges.pop_back();

    out.bin_edges = edges;
    out.k = static_cast<int>(edges.size()) + 1;
    out.degenerate = out.k < k;

    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        double x = dataset.records[i].x_nr;
        // ties at an edge go to the lower bin
        auto it = std::lower_bound(edges.begin(), edges.end(), x);
        out.bin_index[i] = static_cast<int>(it - edges.begin());
    }
    return out;
}

std::vector<double> effective_sampling_distribution(const BinAssignment& bins,
                                                    const WeightVector& weights) {
    weights.check();
    if (static_cast<int>(weights.w.size()) != bins.k)
        throw Error("KMismatch", "weights and bins disagree on k");
    auto n = bins.counts();
    std::vector<double> q(weights.w.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        q[i] = static_cast<double>(n[i]) * weights.w[i];
        total += q[i];
    }
    if (total <= 0.0) throw Error("AllZeroWeightCoverage", "every row has weight 0");
    for (auto& v : q) v /= total;
    return q;
}

Dataset resample(const Dataset& dataset, const BinAssignment& bins,
                 const WeightVector& weights, const PerturbationConfig& cfg) {
    weights.check();
    if (bins.bin_index.size() != dataset.records.size())
        throw Error("KMismatch", "bin assignment does not match dataset");
    if (cfg.perturb_fraction < 0.0 || cfg.perturb_fraction > 1.0)
        throw Error("BadConfig", "perturb_fraction must be in [0,1]");

    const std::size_t n = dataset.records.size();
    std::vector<double> q = effective_sampling_distribution(bins, weights);

    // rows grouped per bin, original order within each bin
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(bins.k));
    for (std::size_t i = 0; i < n; ++i)
        members[static_cast<std::size_t>(bins.bin_index[i])].push_back(i);

    std::vector<double> cum(q.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        acc += q[i];
        cum[i] = acc;
    }
    cum.back() = 1.0;

    rng::CounterRng draw_rng(cfg.seed, rng::tag_hash("resample-draw"));
    auto weighted_draw = [&](std::uint64_t idx) -> std::size_t {
        double u = draw_rng.uniform(2 * idx);
        std::size_t b = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        while (members[b].empty()) ++b;  // guard against fp edge cases on empty bins
        return members[b][draw_rng.index(2 * idx + 1, members[b].size())];
    };

    Dataset out = dataset;
    out.records.clear();

    if (cfg.mode == PerturbMode::full) {
        out.records.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.records.push_back(dataset.records[weighted_draw(i)]);
        return out;
    }

    const std::size_t n_draw = static_cast<std::size_t>(
        std::floor(cfg.perturb_fraction * static_cast<double>(n)));
    const std::size_t n_keep = n - n_draw;

    // uniform subset without replacement: partial Fisher-Yates, then restore order
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng::SeqRng keep_rng(cfg.seed, rng::tag_hash("resample-keep"));
    for (std::size_t i = 0; i < n_keep && i + 1 < n; ++i)
        std::swap(idx[i], idx[i + keep_rng.index(n - i)]);
    idx.resize(n_keep);
    std::sort(idx.begin(), idx.end());

    out.records.reserve(n);
    for (std::size_t i : idx) out.records.push_back(dataset.records[i]);
    for (std::size_t i = 0; i < n_draw; ++i) out.records.push_back(dataset.records[weighted_draw(i)]);
    return out;
}

}  // namespace debias
