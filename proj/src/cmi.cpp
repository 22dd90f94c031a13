#include "debias/cmi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "debias/rng.hpp"

namespace debias {

void StatNetConfig::check() const {
    if (hidden_layers.empty()) throw Error("BadConfig", "need at least one hidden layer");
    for (int h : hidden_layers)
        if (h < 1) throw Error("BadConfig", "hidden widths must be positive");
    if (learning_rate <= 0 || epochs < 1 || batch_size < 1 || knn_k < 1)
        throw Error("BadConfig", "learning_rate, epochs, batch_size, knn_k must be positive");
    if (ema_decay <= 0.0 || ema_decay >= 1.0)
        throw Error("BadConfig", "ema_decay must lie in (0,1)");
}

Dataset conditional_permutation(const Dataset& dataset, int knn_k, std::uint64_t seed) {
    const std::size_t n = dataset.records.size();
    if (n <= static_cast<std::size_t>(knn_k))
        throw Error("TooFewRows", "need more rows than knn_k");
    const int d = dataset.feature_dim;

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = dataset.records[i].x_r[static_cast<std::size_t>(j)];
    Eigen::VectorXd sq = x.rowwise().squaredNorm();

    rng::CounterRng pick(seed, rng::tag_hash("condperm"));
    Dataset out = dataset;

    const Eigen::Index block = 256;
    const std::size_t k = static_cast<std::size_t>(knn_k);
    std::vector<double> dist(n);
    std::vector<std::size_t> cand;
    for (Eigen::Index r0 = 0; r0 < static_cast<Eigen::Index>(n); r0 += block) {
        Eigen::Index rows = std::min(block, static_cast<Eigen::Index>(n) - r0);
        // squared distances row block vs all rows
        Eigen::MatrixXd g = x.middleRows(r0, rows) * x.transpose();
        for (Eigen::Index bi = 0; bi < rows; ++bi) {
            std::size_t i = static_cast<std::size_t>(r0 + bi);
            for (std::size_t j = 0; j < n; ++j)
                dist[j] = sq(static_cast<Eigen::Index>(i)) + sq(static_cast<Eigen::Index>(j)) -
                          2.0 * g(bi, static_cast<Eigen::Index>(j));
            dist[i] = std::numeric_limits<double>::infinity();  // exclude self

            // kth smallest distance, then split candidates into strictly
            // closer rows and rows tied at the boundary
            std::vector<double> tmp(dist);
            std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k - 1), tmp.end());
            double kth = tmp[k - 1];
            cand.clear();
            std::size_t n_closer = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (dist[j] < kth) ++n_closer;
            for (std::size_t j = 0; j < n; ++j)
                if (dist[j] == kth) cand.push_back(j);

            // uniform choice among the k nearest (ties at the boundary are
            // filled by a uniform pick from the tied set)
            std::uint64_t c0 = rng::combine(i, 0x6b6e6eULL);
            std::size_t slot = pick.index(c0, k);
            std::size_t donor;
            if (slot < n_closer) {
                std::size_t seen = 0;
                donor = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (dist[j] < kth && seen++ == slot) {
                        donor = j;
                        break;
                    }
                }
            } else {
                donor = cand[pick.index(rng::combine(i, 0x746965ULL), cand.size())];
            }
            out.records[i].click = dataset.records[donor].click;
            out.records[i].exposure = dataset.records[i].exposure;
        }
    }
    return out;
}

namespace {

// Small fully connected scalar-output network with Adam, used as the
// Donsker-Varadhan statistics function.
class StatNet {
public:
    StatNet(int input_dim, const StatNetConfig& cfg) : cfg_(cfg) {
        std::vector<int> dims;
        dims.push_back(input_dim);
        for (int h : cfg.hidden_layers) dims.push_back(h);
        dims.push_back(1);
        rng::SeqRng init(cfg.seed, rng::tag_hash("statnet-init"));
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            Eigen::MatrixXd w(dims[l + 1], dims[l]);
            double s = std::sqrt(2.0 / dims[l]);
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = s * init.normal();
            w_.push_back(w);
            b_.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
            mw_.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
            vw_.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
            mb_.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
            vb_.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
        }
    }

    // T(x) for a batch (rows of x)
    Eigen::VectorXd forward(const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd a = x;
        for (std::size_t l = 0; l < w_.size(); ++l) {
            a = (a * w_[l].transpose()).rowwise() + b_[l].transpose();
            if (l + 1 < w_.size()) activate(a);
        }
        return a.col(0);
    }

    // Accumulates parameter gradients of sum_i coeff[i] * T(x_i).
    void accumulate_grad(const Eigen::MatrixXd& x, const Eigen::VectorXd& coeff,
                         std::vector<Eigen::MatrixXd>& gw, std::vector<Eigen::VectorXd>& gb) const {
        std::vector<Eigen::MatrixXd> acts;  // activations per layer input
        acts.push_back(x);
        Eigen::MatrixXd a = x;
        std::vector<Eigen::MatrixXd> pre;  // pre-activation values
        for (std::size_t l = 0; l < w_.size(); ++l) {
            a = (a * w_[l].transpose()).rowwise() + b_[l].transpose();
            pre.push_back(a);
            if (l + 1 < w_.size()) {
                activate(a);
                acts.push_back(a);
            }
        }
        Eigen::MatrixXd delta = coeff;  // B x 1
        for (std::size_t li = w_.size(); li-- > 0;) {
            gw[li].noalias() += delta.transpose() * acts[li];
            gb[li] += delta.colwise().sum().transpose();
            if (li > 0) {
                delta = delta * w_[li];
                apply_act_grad(delta, pre[li - 1]);
            }
        }
    }

    void adam_step(const std::vector<Eigen::MatrixXd>& gw, const std::vector<Eigen::VectorXd>& gb) {
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        double c1 = 1.0 - std::pow(b1, t_);
        double c2 = 1.0 - std::pow(b2, t_);
        for (std::size_t l = 0; l < w_.size(); ++l) {
            mw_[l] = b1 * mw_[l] + (1 - b1) * gw[l];
            vw_[l] = b2 * vw_[l].array().matrix() + (1 - b2) * gw[l].array().square().matrix();
            w_[l].array() += cfg_.learning_rate * (mw_[l].array() / c1) /
                             ((vw_[l].array() / c2).sqrt() + eps);
            mb_[l] = b1 * mb_[l] + (1 - b1) * gb[l];
            vb_[l] = b2 * vb_[l].array().matrix() + (1 - b2) * gb[l].array().square().matrix();
            b_[l].array() += cfg_.learning_rate * (mb_[l].array() / c1) /
                             ((vb_[l].array() / c2).sqrt() + eps);
        }
    }

    std::vector<Eigen::MatrixXd> zero_gw() const {
        std::vector<Eigen::MatrixXd> g;
        for (const auto& w : w_) g.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        return g;
    }
    std::vector<Eigen::VectorXd> zero_gb() const {
        std::vector<Eigen::VectorXd> g;
        for (const auto& b : b_) g.push_back(Eigen::VectorXd::Zero(b.size()));
        return g;
    }

private:
    void activate(Eigen::MatrixXd& a) const {
        if (cfg_.activation == Activation::relu)
            a = a.cwiseMax(0.0);
        else
            a = a.array().tanh().matrix();
    }
    void apply_act_grad(Eigen::MatrixXd& delta, const Eigen::MatrixXd& pre) const {
        if (cfg_.activation == Activation::relu)
            delta = (pre.array() > 0.0).select(delta, 0.0);
        else
            delta = (delta.array() * (1.0 - pre.array().tanh().square())).matrix();
    }

    StatNetConfig cfg_;
    std::vector<Eigen::MatrixXd> w_, mw_, vw_;
    std::vector<Eigen::VectorXd> b_, mb_, vb_;
    long t_ = 0;
};

Eigen::MatrixXd build_inputs(const Dataset& dataset, const Dataset& click_source,
                             DependenceTarget target) {
    const std::size_t n = dataset.records.size();
    const int d = dataset.feature_dim;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d + 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = dataset.records[i].x_r[static_cast<std::size_t>(j)];
        x(static_cast<Eigen::Index>(i), d) = target == DependenceTarget::exposure
                                                 ? static_cast<double>(dataset.records[i].exposure)
                                                 : dataset.records[i].x_nr;
        x(static_cast<Eigen::Index>(i), d + 1) = static_cast<double>(click_source.records[i].click);
    }
    return x;
}

double full_dv_objective(const StatNet& net, const Eigen::MatrixXd& joint,
                         const Eigen::MatrixXd& marginal) {
    Eigen::VectorXd tj = net.forward(joint);
    Eigen::VectorXd tm = net.forward(marginal);
    double mean_j = tj.mean();
    double mx = tm.maxCoeff();
    double lse = mx + std::log((tm.array() - mx).exp().mean());
    return mean_j - lse;
}

}  // namespace

CmiEstimate estimate_cmi_dv(const Dataset& dataset, const StatNetConfig& cfg,
                            DependenceTarget target) {
    cfg.check();
    const std::size_t n = dataset.records.size();
    if (n <= static_cast<std::size_t>(cfg.knn_k))
        throw Error("TooFewRows", "need more rows than knn_k");
    for (const auto& r : dataset.records) {
        if (r.click != 0 && r.click != 1)
            throw Error("NonBinaryVariables", "click must be binary");
        if (target == DependenceTarget::exposure && r.exposure != 0 && r.exposure != 1)
            throw Error("NonBinaryVariables", "exposure must be binary");
    }

    Dataset permuted = conditional_permutation(dataset, cfg.knn_k, rng::derive(cfg.seed, "condperm"));
    Eigen::MatrixXd joint = build_inputs(dataset, dataset, target);
    Eigen::MatrixXd marginal = build_inputs(dataset, permuted, target);

    StatNet net(dataset.feature_dim + 2, cfg);
    rng::SeqRng shuffle_rng(cfg.seed, rng::tag_hash("statnet-shuffle"));

    std::vector<std::size_t> order_j(n), order_m(n);
    std::iota(order_j.begin(), order_j.end(), std::size_t{0});
    std::iota(order_m.begin(), order_m.end(), std::size_t{0});

    const std::size_t bsz = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
    const std::size_t n_batches = (n + bsz - 1) / bsz;
    const Eigen::Index dim = joint.cols();

    double ema = -1.0;  // initialised on the first batch
    CmiEstimate est;
    est.n_joint = n;
    est.n_marginal = n;

    Eigen::MatrixXd bj(static_cast<Eigen::Index>(bsz), dim), bm(static_cast<Eigen::Index>(bsz), dim);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order_j[i - 1], order_j[shuffle_rng.index(i)]);
            std::swap(order_m[i - 1], order_m[shuffle_rng.index(i)]);
        }
        for (std::size_t b = 0; b < n_batches; ++b) {
            std::size_t lo = b * bsz;
            std::size_t count = std::min(bsz, n - lo);
            bj.conservativeResize(static_cast<Eigen::Index>(count), dim);
            bm.conservativeResize(static_cast<Eigen::Index>(count), dim);
            for (std::size_t i = 0; i < count; ++i) {
                bj.row(static_cast<Eigen::Index>(i)) = joint.row(static_cast<Eigen::Index>(order_j[lo + i]));
                bm.row(static_cast<Eigen::Index>(i)) = marginal.row(static_cast<Eigen::Index>(order_m[lo + i]));
            }
            Eigen::VectorXd tm = net.forward(bm);
            Eigen::VectorXd em = (tm.array().min(50.0)).exp();
            double mean_em = em.mean();
            if (!std::isfinite(mean_em)) throw Error("DivergedTraining", "exp moment is not finite");
            ema = ema < 0.0 ? mean_em : cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * mean_em;

            auto gw = net.zero_gw();
            auto gb = net.zero_gb();
            double cn = static_cast<double>(count);
            net.accumulate_grad(bj, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count), 1.0 / cn), gw, gb);
            // d/dtheta of -log E[e^T] with the EMA standing in for the
            // minibatch denominator (standard DV bias correction)
            Eigen::VectorXd cm = -em / (ema * cn);
            net.accumulate_grad(bm, cm, gw, gb);
            net.adam_step(gw, gb);
        }
        double obj = full_dv_objective(net, joint, marginal);
        if (!std::isfinite(obj)) throw Error("DivergedTraining", "DV objective is not finite");
        est.train_curve.push_back(obj);
    }
    est.value = std::max(0.0, est.train_curve.back());
    return est;
}

double plugin_cmi_discrete(const std::vector<std::array<double, 4>>& counts) {
    double total = 0.0;
    for (const auto& c : counts)
        for (double v : c) {
            if (v < 0.0) throw Error("EmptyCounts", "counts must be non-negative");
            total += v;
        }
    if (counts.empty() || total <= 0.0) throw Error("EmptyCounts", "counts sum to zero");

    double cmi = 0.0;
    for (const auto& c : counts) {
        double nx = c[0] + c[1] + c[2] + c[3];
        if (nx <= 0.0) continue;
        double px = nx / total;
        // marginals within the bucket; index = e*2 + c
        double pe1 = (c[2] + c[3]) / nx;
        double pc1 = (c[1] + c[3]) / nx;
        double pe[2] = {1.0 - pe1, pe1};
        double pc[2] = {1.0 - pc1, pc1};
        double inner = 0.0;
        for (int e = 0; e < 2; ++e)
            for (int cc = 0; cc < 2; ++cc) {
                double p = c[static_cast<std::size_t>(e * 2 + cc)] / nx;
                if (p > 0.0) inner += p * std::log(p / (pe[e] * pc[cc]));
            }
        cmi += px * inner;
    }
    return cmi;
}

}  // namespace debias
