#include "debias/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "debias/rng.hpp"

namespace debias {

void BoConfig::check() const {
    if (n_iter < 1) throw Error("BadConfig", "n_iter must be >= 1");
    if (length_scale <= 0 || noise_variance <= 0 || xi < 0 || n_candidates < 1)
        throw Error("BadConfig", "invalid BO parameters");
    for (const auto& [lo, hi] : bounds)
        if (!(lo < hi)) throw Error("BadConfig", "bounds must satisfy lo < hi");
}

namespace {

double kernel_value(GpKernel k, double r, double ell) {
    double s = r / ell;
    if (k == GpKernel::rbf) return std::exp(-0.5 * s * s);
    double a = std::sqrt(5.0) * s;
    return (1.0 + a + a * a / 3.0) * std::exp(-a);
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& pts) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()),
                      static_cast<Eigen::Index>(pts.empty() ? 0 : pts[0].size()));
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pts[i][j];
    return m;
}

// GP fitted once and queried many times during acquisition search.
class GpModel {
public:
    GpModel(const std::vector<std::vector<double>>& points, const std::vector<double>& values,
            const BoConfig& cfg)
        : x_(to_matrix(points)), cfg_(cfg) {
        const Eigen::Index n = x_.rows();
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) y(i) = values[static_cast<std::size_t>(i)];
        mean_ = y.mean();
        y.array() -= mean_;

        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) {
                double r = (x_.row(i) - x_.row(j)).norm();
                k(i, j) = k(j, i) = kernel_value(cfg.kernel, r, cfg.length_scale);
            }
        double jitter = 1e-8;
        for (;;) {
            Eigen::MatrixXd kn = k;
            kn.diagonal().array() += cfg.noise_variance + jitter;
            llt_.compute(kn);
            if (llt_.info() == Eigen::Success) break;
            jitter *= 10.0;
            if (jitter > 1e-4) throw Error("SingularKernel", "kernel matrix is singular");
        }
        alpha_ = llt_.solve(y);
    }

    std::pair<double, double> posterior(const std::vector<double>& q) const {
        const Eigen::Index n = x_.rows();
        Eigen::VectorXd kq(n);
        Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(q.size()));
        for (Eigen::Index i = 0; i < n; ++i)
            kq(i) = kernel_value(cfg_.kernel, (x_.row(i).transpose() - qv).norm(), cfg_.length_scale);
        double m = mean_ + kq.dot(alpha_);
        Eigen::VectorXd v = llt_.matrixL().solve(kq);
        double var = kernel_value(cfg_.kernel, 0.0, cfg_.length_scale) - v.squaredNorm();
        return {m, std::max(0.0, var)};
    }

private:
    Eigen::MatrixXd x_;
    BoConfig cfg_;
    double mean_ = 0.0;
    Eigen::VectorXd alpha_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace

void gp_posterior(const std::vector<std::vector<double>>& points,
                  const std::vector<double>& values,
                  const std::vector<std::vector<double>>& queries, const BoConfig& cfg,
                  std::vector<double>& mean_out, std::vector<double>& var_out) {
    if (points.empty() || points.size() != values.size())
        throw Error("BadConfig", "gp_posterior needs at least one observation");
    GpModel gp(points, values, cfg);
    mean_out.clear();
    var_out.clear();
    for (const auto& q : queries) {
        auto [m, v] = gp.posterior(q);
        mean_out.push_back(m);
        var_out.push_back(v);
    }
}

double expected_improvement(double mean, double variance, double best_so_far, double xi) {
    if (variance < 0) throw Error("BadConfig", "variance must be non-negative");
    double gap = best_so_far - mean - xi;
    double sigma = std::sqrt(variance);
    if (sigma == 0.0) return std::max(0.0, gap);
    double z = gap / sigma;
    return gap * norm_cdf(z) + sigma * norm_pdf(z);
}

BoTrace minimize(const std::function<double(const std::vector<double>&)>& objective,
                 int dim, const BoConfig& cfg) {
    cfg.check();
    if (dim < 1) throw Error("BadConfig", "dim must be >= 1");
    std::vector<std::pair<double, double>> bounds = cfg.bounds;
    if (bounds.empty()) bounds.assign(static_cast<std::size_t>(dim), {0.05, 1.0});
    if (static_cast<int>(bounds.size()) != dim)
        throw Error("BadConfig", "bounds dimension mismatch");

    const int n_init = cfg.n_init > 0 ? cfg.n_init : 2 * dim + 1;
    rng::SeqRng rng(cfg.seed, rng::tag_hash("bo"));

    auto denorm = [&](const std::vector<double>& u) {
        std::vector<double> x(u.size());
        for (std::size_t j = 0; j < u.size(); ++j)
            x[j] = bounds[j].first + u[j] * (bounds[j].second - bounds[j].first);
        return x;
    };

    BoTrace trace;
    std::vector<std::vector<double>> unit_points;  // normalized coordinates
    std::vector<double> raw_values;

    auto eval_at = [&](const std::vector<double>& u) {
        std::vector<double> x = denorm(u);
        double v = objective(x);
        bool bad = !std::isfinite(v);
        unit_points.push_back(u);
        trace.points.push_back(x);
        raw_values.push_back(v);
        trace.non_finite.push_back(bad);
    };

    // Latin hypercube initialization
    std::vector<std::vector<std::size_t>> perms(static_cast<std::size_t>(dim));
    for (auto& p : perms) {
        p.resize(static_cast<std::size_t>(n_init));
        std::iota(p.begin(), p.end(), std::size_t{0});
        for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
    }
    for (int i = 0; i < n_init; ++i) {
        std::vector<double> u(static_cast<std::size_t>(dim));
        for (int j = 0; j < dim; ++j)
            u[static_cast<std::size_t>(j)] =
                (static_cast<double>(perms[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]) + rng.uniform()) /
                n_init;
        eval_at(u);
    }

    // non-finite observations enter the surrogate at worst + 3 * range
    auto surrogate_values = [&]() {
        double worst = -std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < raw_values.size(); ++i)
            if (!trace.non_finite[i]) {
                worst = std::max(worst, raw_values[i]);
                best = std::min(best, raw_values[i]);
            }
        if (!std::isfinite(worst)) throw Error("ObjectiveAlwaysNonFinite", "no finite objective value observed");
        double fill = worst + 3.0 * std::max(worst - best, 1.0);
        std::vector<double> v(raw_values);
        for (std::size_t i = 0; i < v.size(); ++i)
            if (trace.non_finite[i]) v[i] = fill;
        return v;
    };

    for (int it = 0; it < cfg.n_iter; ++it) {
        std::vector<double> vals = surrogate_values();
        // z-score objective values before GP fitting
        double m = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
        double var = 0.0;
        for (double v : vals) var += (v - m) * (v - m);
        double sd = std::sqrt(var / vals.size());
        if (sd <= 0.0) sd = 1.0;
        std::vector<double> z(vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) z[i] = (vals[i] - m) / sd;
        double best_z = *std::min_element(z.begin(), z.end());

        GpModel gp(unit_points, z, cfg);
        auto ei_at = [&](const std::vector<double>& u) {
            auto [pm, pv] = gp.posterior(u);
            return expected_improvement(pm, pv, best_z, cfg.xi);
        };

        // seeded uniform candidate sweep
        std::vector<std::pair<double, std::vector<double>>> top;
        for (int cidx = 0; cidx < cfg.n_candidates; ++cidx) {
            std::vector<double> u(static_cast<std::size_t>(dim));
            for (auto& uj : u) uj = rng.uniform();
            double ei = ei_at(u);
            top.emplace_back(ei, std::move(u));
            std::push_heap(top.begin(), top.end(),
                           [](const auto& a, const auto& b) { return a.first > b.first; });
            if (top.size() > 5) {
                std::pop_heap(top.begin(), top.end(),
                              [](const auto& a, const auto& b) { return a.first > b.first; });
                top.pop_back();
            }
        }

        // local coordinate refinement around the best candidates
        double best_ei = -1.0;
        std::vector<double> best_u;
        for (auto& [ei0, u0] : top) {
            std::vector<double> u = u0;
            double ei = ei0;
            for (double step = 0.25; step >= 1e-3; step *= 0.5) {
                bool improved = true;
                while (improved) {
                    improved = false;
                    for (int j = 0; j < dim; ++j) {
                        for (double dir : {+1.0, -1.0}) {
                            std::vector<double> u2 = u;
                            u2[static_cast<std::size_t>(j)] =
                                std::clamp(u2[static_cast<std::size_t>(j)] + dir * step, 0.0, 1.0);
                            double e2 = ei_at(u2);
                            if (e2 > ei) {
                                ei = e2;
                                u = u2;
                                improved = true;
                            }
                        }
                    }
                }
            }
            if (ei > best_ei) {
                best_ei = ei;
                best_u = u;
            }
        }
        eval_at(best_u);
    }

    trace.values = surrogate_values();
    trace.best_value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < raw_values.size(); ++i) {
        if (!trace.non_finite[i] && raw_values[i] < trace.best_value) {
            trace.best_value = raw_values[i];
            trace.best_index = i;
        }
        if (!trace.non_finite[i]) trace.values[i] = raw_values[i];
    }
    trace.best_point = trace.points[trace.best_index];
    return trace;
}

}  // namespace debias
