#include "debias/core_data.hpp"

#include <cmath>

namespace debias {

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::eval: return "eval";
        case Split::benchmark: return "benchmark";
    }
    return "?";
}

const char* to_string(XnrKind k) {
    return k == XnrKind::continuous ? "continuous" : "categorical";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "eval") return Split::eval;
    if (s == "benchmark") return Split::benchmark;
    throw Error("BadEnum", "unknown split '" + s + "'");
}

XnrKind xnr_kind_from_string(const std::string& s) {
    if (s == "continuous") return XnrKind::continuous;
    if (s == "categorical") return XnrKind::categorical;
    throw Error("BadEnum", "unknown x_nr kind '" + s + "'");
}

std::vector<std::size_t> BinAssignment::counts() const {
    std::vector<std::size_t> n(static_cast<std::size_t>(k), 0);
    for (int b : bin_index) n[static_cast<std::size_t>(b)]++;
    return n;
}

std::vector<Violation> validate(const Dataset& dataset) {
    std::vector<Violation> out;
    if (dataset.records.empty()) {
        out.push_back({Violation::npos, "non-empty"});
        return out;
    }
    if (dataset.feature_dim <= 0) out.push_back({Violation::npos, "feature-dim-positive"});
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const auto& r = dataset.records[i];
        if (static_cast<int>(r.x_r.size()) != dataset.feature_dim)
            out.push_back({i, "feature-dim"});
        if (r.exposure != 0 && r.exposure != 1) out.push_back({i, "exposure-binary"});
        if (r.click != 0 && r.click != 1) out.push_back({i, "click-binary"});
        if (r.click == 1 && r.exposure == 0) out.push_back({i, "click-implies-exposure"});
        if (!std::isfinite(r.x_nr)) out.push_back({i, "x-nr-finite"});
        for (double v : r.x_r) {
            if (!std::isfinite(v)) {
                out.push_back({i, "x-r-finite"});
                break;
            }
        }
        if (dataset.x_nr_kind == XnrKind::categorical) {
            double code = r.x_nr;
            if (code < 0 || code >= static_cast<double>(dataset.x_nr_labels.size()) ||
                code != std::floor(code))
                out.push_back({i, "x-nr-label-code"});
        }
    }
    return out;
}

Dataset StandardizeTransform::apply(const Dataset& dataset) const {
    Dataset out = dataset;
    for (auto& r : out.records) {
        for (std::size_t j = 0; j < r.x_r.size() && j < mean.size(); ++j)
            r.x_r[j] = (r.x_r[j] - mean[j]) / scale[j];
    }
    return out;
}

std::pair<Dataset, StandardizeTransform> standardize_features(const Dataset& dataset) {
    if (dataset.records.size() < 2)
        throw Error("EmptyDataset", "standardize_features needs at least 2 records");
    const std::size_t d = static_cast<std::size_t>(dataset.feature_dim);
    const double n = static_cast<double>(dataset.records.size());
    StandardizeTransform t;
    t.mean.assign(d, 0.0);
    t.scale.assign(d, 1.0);
    for (const auto& r : dataset.records)
        for (std::size_t j = 0; j < d; ++j) t.mean[j] += r.x_r[j];
    for (std::size_t j = 0; j < d; ++j) t.mean[j] /= n;
    std::vector<double> var(d, 0.0);
    for (const auto& r : dataset.records)
        for (std::size_t j = 0; j < d; ++j) {
            double c = r.x_r[j] - t.mean[j];
            var[j] += c * c;
        }
    for (std::size_t j = 0; j < d; ++j) {
        double sd = std::sqrt(var[j] / n);  // population sd
        t.scale[j] = sd > 0.0 ? sd : 1.0;
    }
    return {t.apply(dataset), t};
}

}  // namespace debias
