#include "debias/click_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

namespace debias {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_prob(double p) {
    return std::min(1.0 - kScoreClamp, std::max(kScoreClamp, p));
}

double bce_term(double c, double p) {
    p = clamp_prob(p);
    return -(c * std::log(p) + (1.0 - c) * std::log(1.0 - p));
}

void check_schema(const FeatureSchema& schema, const Dataset& dataset) {
    if (schema.x_r_dim != dataset.feature_dim)
        throw Error("SchemaMismatch", "x_r dimension differs from model schema");
    if (schema.includes_x_nr && schema.x_nr_onehot > 0 &&
        (dataset.x_nr_kind != XnrKind::categorical ||
         static_cast<int>(dataset.x_nr_labels.size()) != schema.x_nr_onehot))
        throw Error("SchemaMismatch", "categorical x_nr does not match model schema");
}

}  // namespace

void ClickModelConfig::check() const {
    if (l2 < 0) throw Error("BadConfig", "l2 must be non-negative");
    if (learning_rate <= 0 || epochs < 1 || n_stumps < 1 || shrinkage <= 0)
        throw Error("BadConfig", "learning_rate, epochs, n_stumps, shrinkage must be positive");
}

std::vector<double> build_features(const FeatureSchema& schema, const Dataset& dataset,
                                   std::size_t row) {
    check_schema(schema, dataset);
    const auto& r = dataset.records.at(row);
    std::vector<double> x = r.x_r;
    if (schema.includes_x_nr) {
        if (schema.x_nr_onehot > 0) {
            std::vector<double> oh(static_cast<std::size_t>(schema.x_nr_onehot), 0.0);
            oh[static_cast<std::size_t>(r.x_nr)] = 1.0;
            x.insert(x.end(), oh.begin(), oh.end());
        } else {
            x.push_back(r.x_nr);
        }
    }
    return x;
}

namespace {

Eigen::MatrixXd feature_matrix(const FeatureSchema& schema, const Dataset& dataset) {
    const std::size_t n = dataset.records.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), schema.input_dim());
    for (std::size_t i = 0; i < n; ++i) {
        auto row = build_features(schema, dataset, i);
        for (std::size_t j = 0; j < row.size(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return x;
}

FittedClickModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& c,
                              const Eigen::VectorXd& rw, const ClickModelConfig& cfg,
                              FittedClickModel model) {
    const Eigen::Index n = x.rows(), d = x.cols();
    const double wsum = rw.sum();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;

    auto objective = [&](const Eigen::VectorXd& wv, double bv) {
        Eigen::VectorXd z = x * wv;
        z.array() += bv;
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            loss += rw(i) * bce_term(c(i), sigmoid(z(i)));
        return loss / wsum + 0.5 * cfg.l2 * wv.squaredNorm();
    };

    double cur = objective(w, b);
    model.train_loss_curve.push_back(cur);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Eigen::VectorXd z = x * w;
        z.array() += b;
        Eigen::VectorXd resid(n);
        for (Eigen::Index i = 0; i < n; ++i) resid(i) = rw(i) * (sigmoid(z(i)) - c(i));
        Eigen::VectorXd gw = x.transpose() * resid / wsum + cfg.l2 * w;
        double gb = resid.sum() / wsum;

        // backtracking keeps the loss curve non-increasing
        double step = cfg.learning_rate;
        Eigen::VectorXd w_new;
        double b_new, next;
        for (int half = 0;; ++half) {
            w_new = w - step * gw;
            b_new = b - step * gb;
            next = objective(w_new, b_new);
            if (next <= cur + 1e-12 || half >= 40) break;
            step *= 0.5;
        }
        if (next <= cur) {
            w = w_new;
            b = b_new;
            cur = next;
        }
        model.train_loss_curve.push_back(cur);
    }
    model.weights.assign(w.data(), w.data() + w.size());
    model.bias = b;
    return model;
}

FittedClickModel fit_stumps(const Eigen::MatrixXd& x, const Eigen::VectorXd& c,
                            const Eigen::VectorXd& rw, const ClickModelConfig& cfg,
                            FittedClickModel model) {
    const Eigen::Index n = x.rows(), d = x.cols();
    const double wsum = rw.sum();

    double base_rate = clamp_prob(rw.dot(c) / wsum);
    model.base_score = std::log(base_rate / (1.0 - base_rate));
    model.shrinkage = cfg.shrinkage;

    // per-feature sort order, computed once
    std::vector<std::vector<Eigen::Index>> order(static_cast<std::size_t>(d));
    for (Eigen::Index f = 0; f < d; ++f) {
        auto& o = order[static_cast<std::size_t>(f)];
        o.resize(static_cast<std::size_t>(n));
        std::iota(o.begin(), o.end(), Eigen::Index{0});
        std::stable_sort(o.begin(), o.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return x(a, f) < x(b, f); });
    }

    Eigen::VectorXd score = Eigen::VectorXd::Constant(n, model.base_score);
    for (int m = 0; m < cfg.n_stumps; ++m) {
        Eigen::VectorXd p(n), g(n), h(n);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = sigmoid(score(i));
            g(i) = rw(i) * (c(i) - p(i));
            h(i) = rw(i) * std::max(p(i) * (1.0 - p(i)), 1e-12);
            loss += rw(i) * bce_term(c(i), p(i));
        }
        model.train_loss_curve.push_back(loss / wsum);

        double gtot = g.sum(), htot = h.sum();
        double best_gain = -1.0;
        Stump best;
        for (Eigen::Index f = 0; f < d; ++f) {
            const auto& o = order[static_cast<std::size_t>(f)];
            double gl = 0.0, hl = 0.0;
            for (std::size_t i = 0; i + 1 < o.size(); ++i) {
                gl += g(o[i]);
                hl += h(o[i]);
                double xv = x(o[i], f), xn = x(o[i + 1], f);
                if (xv == xn) continue;
                double gr = gtot - gl, hr = htot - hl;
                double gain = gl * gl / (hl + cfg.l2) + gr * gr / (hr + cfg.l2);
                if (gain > best_gain) {
                    best_gain = gain;
                    best.feature = static_cast<int>(f);
                    best.threshold = 0.5 * (xv + xn);
                    best.left = gl / (hl + cfg.l2);
                    best.right = gr / (hr + cfg.l2);
                }
            }
        }
        if (best_gain < 0.0) break;  // all features constant
        model.stumps.push_back(best);
        for (Eigen::Index i = 0; i < n; ++i)
            score(i) += cfg.shrinkage *
                        (x(i, best.feature) <= best.threshold ? best.left : best.right);
    }
    return model;
}

}  // namespace

FittedClickModel fit(const Dataset& dataset, const ClickModelConfig& cfg,
                     std::span<const double> row_weights) {
    cfg.check();
    if (dataset.records.empty()) throw Error("EmptyDataset", "cannot fit on an empty dataset");
    if (!row_weights.empty() && row_weights.size() != dataset.records.size())
        throw Error("SchemaMismatch", "row weights do not match dataset size");

    FittedClickModel model;
    model.kind = cfg.model_kind;
    model.schema.x_r_dim = dataset.feature_dim;
    model.schema.includes_x_nr = cfg.include_bias_factor;
    model.schema.x_nr_onehot =
        (cfg.include_bias_factor && dataset.x_nr_kind == XnrKind::categorical)
            ? static_cast<int>(dataset.x_nr_labels.size())
            : 0;

    const std::size_t n = dataset.records.size();
    Eigen::VectorXd c(static_cast<Eigen::Index>(n)), rw(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        c(static_cast<Eigen::Index>(i)) = dataset.records[i].click;
        rw(static_cast<Eigen::Index>(i)) = row_weights.empty() ? 1.0 : row_weights[i];
        if (rw(static_cast<Eigen::Index>(i)) < 0)
            throw Error("SchemaMismatch", "row weights must be non-negative");
    }

    // degenerate target: constant predictor instead of a failure
    if ((c.array() == c(0)).all()) {
        model.kind = ClickModelKind::logistic;
        model.single_class = true;
        model.weights.assign(static_cast<std::size_t>(model.schema.input_dim()), 0.0);
        double p = clamp_prob(c(0));
        model.bias = std::log(p / (1.0 - p));
        model.train_loss_curve.push_back(bce_term(c(0), p));
        return model;
    }

    Eigen::MatrixXd x = feature_matrix(model.schema, dataset);
    if (cfg.model_kind == ClickModelKind::logistic)
        return fit_logistic(x, c, rw, cfg, std::move(model));
    return fit_stumps(x, c, rw, cfg, std::move(model));
}

double predict(const FittedClickModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.schema.input_dim())
        throw Error("SchemaMismatch", "feature vector does not match model schema");
    double z;
    if (model.kind == ClickModelKind::logistic) {
        z = model.bias;
        for (std::size_t j = 0; j < x.size(); ++j) z += model.weights[j] * x[j];
    } else {
        z = model.base_score;
        for (const auto& s : model.stumps)
            z += model.shrinkage *
                 (x[static_cast<std::size_t>(s.feature)] <= s.threshold ? s.left : s.right);
    }
    return clamp_prob(sigmoid(z));
}

std::vector<double> predict_dataset(const FittedClickModel& model, const Dataset& dataset) {
    check_schema(model.schema, dataset);
    std::vector<double> out;
    out.reserve(dataset.records.size());
    for (std::size_t i = 0; i < dataset.records.size(); ++i)
        out.push_back(predict(model, build_features(model.schema, dataset, i)));
    return out;
}

double bce_loss(const FittedClickModel& model, const Dataset& dataset) {
    if (dataset.records.empty()) throw Error("EmptyDataset", "bce_loss on empty dataset");
    auto p = predict_dataset(model, dataset);
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        loss += bce_term(dataset.records[i].click, p[i]);
    return loss / static_cast<double>(p.size());
}

nlohmann::json FittedClickModel::to_json() const {
    nlohmann::json j{
        {"version", 1},
        {"kind", kind == ClickModelKind::logistic ? "logistic" : "boosted_stumps"},
        {"schema",
         {{"x_r_dim", schema.x_r_dim},
          {"includes_x_nr", schema.includes_x_nr},
          {"x_nr_onehot", schema.x_nr_onehot}}},
        {"single_class", single_class},
        {"train_loss_curve", train_loss_curve},
    };
    if (kind == ClickModelKind::logistic) {
        j["weights"] = weights;
        j["bias"] = bias;
    } else {
        j["base_score"] = base_score;
        j["shrinkage"] = shrinkage;
        auto& arr = j["stumps"] = nlohmann::json::array();
        for (const auto& s : stumps)
            arr.push_back({{"feature", s.feature},
                           {"threshold", s.threshold},
                           {"left", s.left},
                           {"right", s.right}});
    }
    return j;
}

FittedClickModel FittedClickModel::from_json(const nlohmann::json& j) {
    FittedClickModel m;
    m.kind = j.at("kind") == "logistic" ? ClickModelKind::logistic : ClickModelKind::boosted_stumps;
    m.schema.x_r_dim = j.at("schema").at("x_r_dim");
    m.schema.includes_x_nr = j.at("schema").at("includes_x_nr");
    m.schema.x_nr_onehot = j.at("schema").at("x_nr_onehot");
    m.single_class = j.value("single_class", false);
    m.train_loss_curve = j.value("train_loss_curve", std::vector<double>{});
    if (m.kind == ClickModelKind::logistic) {
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias");
    } else {
        m.base_score = j.at("base_score");
        m.shrinkage = j.at("shrinkage");
        for (const auto& s : j.at("stumps"))
            m.stumps.push_back({s.at("feature"), s.at("threshold"), s.at("left"), s.at("right")});
    }
    return m;
}

}  // namespace debias
